"""Semi-supervised signal recognition with swapped-prediction consistency."""
