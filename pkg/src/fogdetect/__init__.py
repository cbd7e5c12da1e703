"""Freezing-of-gait detection from a single waist accelerometer.

Synthetic cohort generation, spectral preprocessing, a numpy transformer
trained with hand-written backpropagation, a random-forest baseline,
leave-one-subject-out evaluation and episode/cluster post-processing.
"""

__version__ = "0.1.0"
