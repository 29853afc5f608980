"""Miniature dense-concat CNN toolkit: numpy layer graphs with exact
backprop, receptive-field calculators, a seeded augmentation pipeline,
cyclical learning-rate schedules and a training harness."""

__version__ = "1.0.0"
