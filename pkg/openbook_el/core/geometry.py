"""
Open book geometry: shapes, points, samples, the intrinsic metric, folding
maps, spine projection and sample Fréchet means.

An open book has ``pages`` half-spaces of dimension ``dim`` glued along a
common (dim-1)-dimensional spine. A point on page k has a positive normal
coordinate (distance to the spine) and dim-1 tangential coordinates; a spine
point has tangential coordinates only. With dim = 1 the book is a spider and
the spine is a single point.

Page indices are 1-based in every public signature. Arrays indexed by page
(folded means, per-page results) are 0-based, so entry k-1 belongs to page k.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from openbook_el.util.config_parser import CsvTable
from openbook_el.util.logger import logger


class ShapeMismatchError(ValueError):
    """A point or sample does not conform to the book shape it is used with"""


class InvalidInputError(ValueError):
    """Input data are malformed (non-finite values, bad indices, bad sizes)"""


class DegenerateSampleError(RuntimeError):
    """A statistical computation has no meaningful answer for this sample"""


@dataclass(frozen=True)
class BookShape:
    """Number of pages and page dimension of an open book"""
    pages: int = 3
    dim: int = 1

    def __post_init__(self):
        if int(self.pages) != self.pages or self.pages < 3:
            raise InvalidInputError(f"An open book needs at least 3 pages, got {self.pages}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"Page dimension must be a positive integer, got {self.dim}")
        object.__setattr__(self, 'pages', int(self.pages))
        object.__setattr__(self, 'dim', int(self.dim))

    @property
    def spine_dim(self) -> int:
        return self.dim - 1

    @property
    def is_spider(self) -> bool:
        return self.dim == 1

    def to_dict(self) -> dict:
        return {'pages': self.pages, 'dim': self.dim}

    @classmethod
    def from_dict(cls, data: dict) -> 'BookShape':
        try:
            return cls(pages=data['pages'], dim=data['dim'])
        except KeyError as e:
            raise InvalidInputError(f"Shape is missing the field {e}")

    @classmethod
    def parse(cls, text: str) -> 'BookShape':
        """Parse the inline form 'L,p' (e.g. '3,1')"""
        parts = [part.strip() for part in str(text).split(',')]
        if len(parts) != 2:
            raise InvalidInputError(f"Shape must look like 'pages,dim', got '{text}'")
        try:
            return cls(pages=int(parts[0]), dim=int(parts[1]))
        except ValueError:
            raise InvalidInputError(f"Shape must look like 'pages,dim', got '{text}'")


@dataclass(frozen=True)
class BookPoint:
    """
    A location on the open book.

    ``page`` is the 1-based page index, or None on the spine. A point whose
    normal coordinate is 0 is canonicalized to the spine.
    """
    page: Optional[int]
    normal: float = 0.0
    tangential: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        tangential = tuple(float(t) for t in self.tangential)
        normal = float(self.normal)
        if not math.isfinite(normal) or not all(math.isfinite(t) for t in tangential):
            raise InvalidInputError("Point coordinates must be finite")
        if normal < 0:
            raise InvalidInputError(f"Normal coordinate must be nonnegative, got {normal}")
        page = self.page
        if normal == 0.0:
            page = None
            normal = 0.0
        elif page is None:
            raise InvalidInputError("A spine point cannot have a nonzero normal coordinate")
        elif int(page) != page or page < 1:
            raise InvalidInputError(f"Page index must be a positive integer, got {page}")
        object.__setattr__(self, 'page', None if page is None else int(page))
        object.__setattr__(self, 'normal', normal)
        object.__setattr__(self, 'tangential', tangential)

    @classmethod
    def on_page(cls, page: int, normal: float, tangential: Sequence[float] = ()) -> 'BookPoint':
        return cls(page=page, normal=normal, tangential=tuple(tangential))

    @classmethod
    def spine(cls, tangential: Sequence[float] = ()) -> 'BookPoint':
        return cls(page=None, normal=0.0, tangential=tuple(tangential))

    @property
    def is_spine(self) -> bool:
        return self.page is None

    def check(self, shape: BookShape) -> 'BookPoint':
        """Raise ShapeMismatchError unless the point lives on ``shape``"""
        if len(self.tangential) != shape.spine_dim:
            raise ShapeMismatchError(
                f"Point has {len(self.tangential)} tangential coordinates, "
                f"shape expects {shape.spine_dim}")
        if self.page is not None and self.page > shape.pages:
            raise ShapeMismatchError(f"Page {self.page} does not exist on a {shape.pages}-page book")
        return self

    def __str__(self) -> str:
        coords = ' '.join(repr(t) for t in self.tangential)
        if self.is_spine:
            return f"spine {coords}".strip()
        return f"page{self.page} {self.normal!r} {coords}".strip()

    @classmethod
    def parse(cls, text: str, shape: BookShape) -> 'BookPoint':
        """
        Parse a point written as 'spine [t1 ...]' or '<page> <normal> [t1 ...]'.

        The page token may be 'leg2', 'page2' or '2'. Commas are accepted as
        separators.
        """
        tokens = str(text).replace(',', ' ').split()
        if not tokens:
            raise InvalidInputError("Empty point specification")
        head = tokens[0].lower()
        try:
            if head == 'spine':
                point = cls.spine([float(t) for t in tokens[1:]])
            else:
                digits = head[3:] if head.startswith('leg') else head[4:] if head.startswith('page') else head
                if len(tokens) < 2:
                    raise InvalidInputError(f"Point '{text}' is missing its normal coordinate")
                point = cls.on_page(int(digits), float(tokens[1]), [float(t) for t in tokens[2:]])
        except ValueError as e:
            if isinstance(e, InvalidInputError):
                raise
            raise InvalidInputError(f"Cannot parse point '{text}': {e}")
        return point.check(shape)


class Sample:
    """
    An ordered sample of points on an open book, stored as arrays.

    ``pages`` holds 1-based page indices with 0 for spine points,
    ``normals`` the normal coordinates (0 on the spine) and ``tangentials``
    an (n, dim-1) array.
    """

    def __init__(self, shape: BookShape, pages: Sequence[int], normals: Sequence[float],
                 tangentials: Optional[np.ndarray] = None):
        pages = np.array(pages, dtype=int).reshape(-1)
        normals = np.array(normals, dtype=float).reshape(-1)
        n = len(pages)
        if n < 1:
            raise InvalidInputError("A sample needs at least one point")
        if len(normals) != n:
            raise InvalidInputError("pages and normals must have the same length")
        if tangentials is None:
            if shape.spine_dim > 0:
                raise ShapeMismatchError(f"Shape expects {shape.spine_dim} tangential coordinates")
            tangentials = np.zeros((n, 0))
        tangentials = np.array(tangentials, dtype=float)
        if tangentials.size == n * shape.spine_dim:
            tangentials = tangentials.reshape(n, shape.spine_dim)
        if tangentials.shape != (n, shape.spine_dim):
            raise ShapeMismatchError(
                f"Tangential coordinates have shape {tangentials.shape}, expected {(n, shape.spine_dim)}")
        if not (np.all(np.isfinite(normals)) and np.all(np.isfinite(tangentials))):
            raise InvalidInputError("Sample coordinates must be finite")
        if np.any(pages < 0) or np.any(pages > shape.pages):
            raise ShapeMismatchError(f"Page indices must lie in 0..{shape.pages}")
        if np.any(normals < 0):
            raise InvalidInputError("Normal coordinates must be nonnegative")
        if np.any((pages == 0) & (normals != 0)):
            raise InvalidInputError("Spine rows (page 0) must have normal coordinate 0")
        pages = np.where(normals == 0, 0, pages)

        self.shape = shape
        self.pages = pages
        self.normals = normals
        self.tangentials = tangentials
        for array in (self.pages, self.normals, self.tangentials):
            array.setflags(write=False)

    @classmethod
    def from_points(cls, shape: BookShape, points: Sequence[BookPoint]) -> 'Sample':
        points = [point.check(shape) for point in points]
        pages = [0 if point.is_spine else point.page for point in points]
        normals = [point.normal for point in points]
        tangentials = np.array([point.tangential for point in points], dtype=float).reshape(
            len(points), shape.spine_dim)
        return cls(shape, pages, normals, tangentials)

    @classmethod
    def spider(cls, legs: Sequence[int], lengths: Sequence[float], pages: int = 3) -> 'Sample':
        """Convenience constructor for a sample on the ``pages``-spider"""
        return cls(BookShape(pages=pages, dim=1), legs, lengths)

    def __len__(self) -> int:
        return len(self.pages)

    @property
    def n(self) -> int:
        return len(self.pages)

    @property
    def points(self) -> List[BookPoint]:
        return [
            BookPoint.spine(t) if page == 0 else BookPoint.on_page(int(page), normal, t)
            for page, normal, t in zip(self.pages, self.normals, self.tangentials)
        ]

    @property
    def scale(self) -> float:
        """Largest absolute coordinate, or 1 for an all-zero sample"""
        largest = max(float(np.max(self.normals)),
                      float(np.max(np.abs(self.tangentials))) if self.tangentials.size else 0.0)
        return largest if largest > 0 else 1.0

    def take(self, indices: Sequence[int]) -> 'Sample':
        """Sub-sample (with repetition allowed) in the given index order"""
        indices = np.asarray(indices, dtype=int)
        return Sample(self.shape, self.pages[indices], self.normals[indices], self.tangentials[indices])

    def to_frame(self) -> pd.DataFrame:
        columns = {'page': self.pages, 'normal': self.normals}
        for j in range(self.shape.spine_dim):
            columns[f"t{j + 1}"] = self.tangentials[:, j]
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, shape: BookShape) -> 'Sample':
        expected = ['page', 'normal'] + [f"t{j + 1}" for j in range(shape.spine_dim)]
        missing = [column for column in expected if column not in frame.columns]
        if missing:
            raise ShapeMismatchError(f"Sample table is missing columns {missing}")
        extra = [column for column in frame.columns if column not in expected]
        if extra:
            raise ShapeMismatchError(f"Sample table has unexpected columns {extra} for shape {shape.to_dict()}")
        try:
            pages = frame['page'].to_numpy(dtype=int)
            normals = frame['normal'].to_numpy(dtype=float)
            tangentials = frame[expected[2:]].to_numpy(dtype=float).reshape(len(frame), shape.spine_dim)
        except (ValueError, TypeError) as e:
            raise InvalidInputError(f"Sample table has non-numeric entries: {e}")
        return cls(shape, pages, normals, tangentials)

    @classmethod
    def load_csv(cls, path: Union[str, Path], shape: BookShape) -> 'Sample':
        return cls.from_frame(CsvTable(path).load(), shape)

    def save_csv(self, path: Union[str, Path]):
        CsvTable(path).save(self.to_frame())


class Regime(Enum):
    """Location regime of a Fréchet mean"""
    NON_STICKY = 'non-sticky'
    STICKY = 'sticky'
    HALF_STICKY = 'half-sticky'


@dataclass(frozen=True)
class MeanReport:
    """A Fréchet mean with its stickiness classification"""
    mean: BookPoint
    regime: Regime
    regime_page: Optional[int]
    folded_normal_means: Tuple[float, ...]

    @property
    def label(self) -> str:
        if self.regime_page is None:
            return self.regime.value
        return f"{self.regime.value}({self.regime_page})"

    def to_dict(self) -> dict:
        return {
            'mean': str(self.mean),
            'on_spine': self.mean.is_spine,
            'page': self.mean.page,
            'normal': self.mean.normal,
            'tangential': list(self.mean.tangential),
            'regime': self.regime.value,
            'regime_page': self.regime_page,
            'folded_normal_means': [float(m) for m in self.folded_normal_means],
        }


def _check_page(k: int, shape: Optional[BookShape] = None):
    if int(k) != k or k < 1 or (shape is not None and k > shape.pages):
        raise ShapeMismatchError(f"Invalid page index {k}")


def distance(a: BookPoint, b: BookPoint, shape: BookShape) -> float:
    """
    Intrinsic distance. Points on the same page (or with either on the spine)
    are compared in Euclidean coordinates; across pages the normal coordinate
    of ``b`` is reflected first.
    """
    a.check(shape)
    b.check(shape)
    sign = -1.0 if (a.page is not None and b.page is not None and a.page != b.page) else 1.0
    delta = np.concatenate(([a.normal - sign * b.normal],
                            np.subtract(a.tangential, b.tangential)))
    return float(np.linalg.norm(delta))


def fold(k: int, x: BookPoint) -> np.ndarray:
    """Folding map for page k: identity on page k, reflection of the normal coordinate elsewhere"""
    _check_page(k)
    normal = x.normal if x.page == k else -x.normal
    return np.concatenate(([normal], x.tangential)).astype(float)


def project_spine(x: BookPoint) -> np.ndarray:
    """Tangential coordinates of x (empty when dim = 1)"""
    return np.asarray(x.tangential, dtype=float)


def fold_sample(sample: Sample, k: int) -> np.ndarray:
    """(n, dim) array of folded points F_k(x_i)"""
    _check_page(k, sample.shape)
    normals = np.where(sample.pages == k, sample.normals, -sample.normals)
    return np.column_stack((normals, sample.tangentials))


def project_sample(sample: Sample) -> np.ndarray:
    """(n, dim-1) array of spine projections"""
    return np.array(sample.tangentials)


def folded_normal_matrix(sample: Sample) -> np.ndarray:
    """(n, pages) array whose column k-1 holds <F_k(x_i), e_k>"""
    on_page = sample.pages[:, None] == np.arange(1, sample.shape.pages + 1)[None, :]
    return np.where(on_page, sample.normals[:, None], -sample.normals[:, None])


def folded_normal_means(sample: Sample) -> np.ndarray:
    """Vector of n^-1 sum_i <F_k(x_i), e_k> for k = 1..pages"""
    return folded_normal_matrix(sample).mean(axis=0)


def frechet_function(sample: Sample, x: BookPoint) -> float:
    """Empirical Fréchet function: mean squared distance from x to the sample"""
    x.check(sample.shape)
    if x.is_spine:
        normal_part = sample.normals
    else:
        normal_part = np.where(sample.pages == x.page, x.normal - sample.normals, x.normal + sample.normals)
    tangential_part = np.sum((sample.tangentials - np.asarray(x.tangential)) ** 2, axis=1)
    return float(np.mean(normal_part ** 2 + tangential_part))


def classify_folded_means(means: Sequence, tol: float) -> Tuple[Regime, Optional[int]]:
    """
    Classify a vector of folded normal means.

    :return: (regime, 1-based page) where page is None for the sticky regime
    :raises DegenerateSampleError: if more than one mean exceeds tol
    """
    positive = [k + 1 for k, m in enumerate(means) if m > tol]
    if len(positive) > 1:
        raise DegenerateSampleError(
            f"Folded normal means {list(map(float, means))} are positive on pages {positive}; "
            f"at most one can be")
    if positive:
        return Regime.NON_STICKY, positive[0]
    vanishing = [k + 1 for k, m in enumerate(means) if abs(m) <= tol]
    if not vanishing or len(vanishing) == len(means):
        return Regime.STICKY, None
    if len(vanishing) > 1:
        logger.warning(f"Folded means vanish on pages {vanishing}; reporting half-sticky on page {vanishing[0]}")
    return Regime.HALF_STICKY, vanishing[0]


def sample_frechet_mean(sample: Sample, tol: Optional[float] = None) -> MeanReport:
    """
    Sample Fréchet mean via the folded normal means.

    :param sample: The sample
    :param tol: Stickiness tolerance (default 1e-10 times the data scale)
    """
    if tol is None:
        tol = 1e-10 * sample.scale
    means = folded_normal_means(sample)
    regime, page = classify_folded_means(means, tol)
    tangential = tuple(project_sample(sample).mean(axis=0)) if sample.shape.spine_dim else ()
    if regime is Regime.NON_STICKY:
        mean = BookPoint.on_page(page, float(means[page - 1]), tangential)
    else:
        mean = BookPoint.spine(tangential)
    return MeanReport(mean=mean, regime=regime, regime_page=page,
                      folded_normal_means=tuple(float(m) for m in means))
