"""ECG atrial-fibrillation detection from autoencoder features and boosted trees."""

__version__ = "0.1.0"
