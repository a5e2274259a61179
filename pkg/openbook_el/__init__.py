"""
Empirical likelihood inference for Fréchet means on open books and spiders.
"""

from .core.geometry import BookPoint, BookShape, Sample, sample_frechet_mean
from .core.el_book import el_book, el_spider, el_spine
from .core.inference import LimitLaw, bootstrap_calibrate, confidence_set_spider, wilks_test

__all__ = [
    'BookPoint',
    'BookShape',
    'Sample',
    'sample_frechet_mean',
    'el_book',
    'el_spider',
    'el_spine',
    'LimitLaw',
    'bootstrap_calibrate',
    'confidence_set_spider',
    'wilks_test',
]
