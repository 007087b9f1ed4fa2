"""Differentially private heavy hitter discovery with prefix trees."""
