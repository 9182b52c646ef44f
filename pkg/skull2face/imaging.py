'''Grayscale image loading, resizing and training-time augmentation'''

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

from skull2face.errors import ConfigError, CorruptImage, MissingFile, UnsupportedFormat
from skull2face.utils import PathLike

PNG_SIGNATURE = b'\x89PNG\r\n\x1a\n'
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class ImageGray:
    r'''Single channel image, intensities in [0, 1].

        ``pixels`` is (height, width); ``data`` is the row-major flattening.'''
    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.size == 0:
            raise CorruptImage(f'image must be a non-empty 2-d array, got shape {pixels.shape}')
        if pixels.min() < 0. or pixels.max() > 1. or not np.isfinite(pixels).all():
            raise ValueError('image intensities must lie in [0, 1]')
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.reshape(-1)


class AugmentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    rotation_max_deg: float = Field(10.0, ge=0)
    hflip_prob: float = Field(0.5, ge=0, le=1)
    brightness_jitter: float = Field(0.2, ge=0)
    contrast_jitter: float = Field(0.2, ge=0)
    affine_translate_frac: float = Field(0.05, ge=0)
    affine_scale_range: Tuple[float, float] = (0.9, 1.1)
    affine_shear_max_deg: float = Field(5.0, ge=0)

    @model_validator(mode='after')
    def _check_scale(self) -> 'AugmentConfig':
        low, high = self.affine_scale_range
        if not 0 < low <= high:
            raise ValueError(f'affine_scale_range must satisfy 0 < min <= max, got {self.affine_scale_range}')
        return self

    @classmethod
    def identity(cls) -> 'AugmentConfig':
        return cls(rotation_max_deg=0, hflip_prob=0, brightness_jitter=0, contrast_jitter=0,
                   affine_translate_frac=0, affine_scale_range=(1.0, 1.0), affine_shear_max_deg=0)


'''==============================DECODING=============================='''

def _pgm_tokens(raw: bytes, count: int) -> Tuple[list, int]:
    r'''Reads ``count`` whitespace separated header tokens, skipping # comments.
        Returns the tokens and the offset of the single whitespace byte that ends the header.'''
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise CorruptImage('truncated PGM header')
        if raw[pos:pos + 1] == b'#':
            end = raw.find(b'\n', pos)
            if end < 0:
                raise CorruptImage('truncated PGM header')
            pos = end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    return tokens, pos


def decode_pgm(raw: bytes) -> ImageGray:
    tokens, pos = _pgm_tokens(raw, 4)
    if tokens[0] != b'P5':
        raise UnsupportedFormat(f'only binary PGM (P5) is supported, got {tokens[0][:2]!r}')
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise CorruptImage(f'malformed PGM header: {e}') from e
    if width <= 0 or height <= 0:
        raise CorruptImage(f'PGM has a zero dimension ({width}x{height})')
    if not 0 < maxval <= 255:
        raise UnsupportedFormat(f'PGM maxval {maxval} is not an 8-bit image')
    if pos >= len(raw):
        raise CorruptImage('PGM has no pixel data')
    body = raw[pos + 1:pos + 1 + width * height]
    if len(body) < width * height:
        raise CorruptImage(f'PGM pixel data truncated: {len(body)} of {width * height} bytes')
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(np.float64)
    if pixels.max() > maxval:
        raise CorruptImage(f'PGM sample exceeds maxval {maxval}')
    return ImageGray(pixels / maxval)


def decode_png(raw: bytes) -> ImageGray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            mode = im.mode
            if mode in ('L', 'P'):
                array = np.asarray(im.convert('L'), dtype=np.float64)
            elif mode in ('RGB', 'RGBA', 'LA'):
                array = np.asarray(im.convert('RGB'), dtype=np.float64) @ LUMA_WEIGHTS
            else:
                raise UnsupportedFormat(f'PNG mode {mode} is not an 8-bit grayscale or RGB image')
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise CorruptImage(f'cannot decode PNG: {e}') from e
    if array.size == 0:
        raise CorruptImage('PNG has a zero dimension')
    return ImageGray(np.clip(array / 255., 0., 1.))


def load_image(path: PathLike, allow_png: bool = True) -> ImageGray:
    r'''Loads a binary PGM (P5) or, when ``allow_png``, an 8-bit PNG.

        RGB input is reduced to luma with weights 0.299 / 0.587 / 0.114.'''
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'image not found: {path}', path=str(path))
    raw = path.read_bytes()
    if raw[:2] == b'P5':
        return decode_pgm(raw)
    if raw[:8] == PNG_SIGNATURE:
        if not allow_png:
            raise UnsupportedFormat(f'{path}: PNG input is disabled')
        return decode_png(raw)
    if raw[:1] == b'P' and raw[1:2].isdigit():
        raise UnsupportedFormat(f'{path}: only binary PGM (P5) is supported')
    raise UnsupportedFormat(f'{path}: not a PGM or PNG file')


def write_pgm(img: ImageGray, path: PathLike) -> None:
    body = np.rint(img.pixels * 255.).astype(np.uint8).tobytes()
    header = f'P5\n{img.width} {img.height}\n255\n'.encode('ascii')
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(header + body)


'''==============================GEOMETRY=============================='''

def _axis_coords(src: int, dst: int) -> np.ndarray:
    # corner aligned: first and last output samples hit the first and last source pixels
    if dst == 1:
        return np.array([(src - 1) / 2.])
    return np.arange(dst) * ((src - 1) / (dst - 1))


def resize_bilinear(img: ImageGray, w: int, h: int) -> ImageGray:
    if w < 1 or h < 1:
        raise ConfigError(f'target size must be at least 1x1, got {w}x{h}')
    if (w, h) == (img.width, img.height):
        return img
    rows = _axis_coords(img.height, h)
    cols = _axis_coords(img.width, w)
    grid = np.meshgrid(rows, cols, indexing='ij')
    out = ndimage.map_coordinates(img.pixels, grid, order=1, mode='nearest')
    return ImageGray(np.clip(out, 0., 1.))


def hflip(img: ImageGray) -> ImageGray:
    return ImageGray(img.pixels[:, ::-1])


def _warp(pixels: np.ndarray, forward: np.ndarray) -> np.ndarray:
    r'''Applies a 2x2 linear map plus translation (3x3 homogeneous, (row, col) order)
        about the image center, bilinear, zero outside the source.'''
    center = (np.array(pixels.shape, dtype=np.float64) - 1.) / 2.
    inverse = np.linalg.inv(forward)
    matrix = inverse[:2, :2]
    # output o maps to input: center + M (o - center - t)
    offset = center - matrix @ (center + forward[:2, 2])
    out = ndimage.affine_transform(pixels, matrix, offset=offset, order=1,
                                   mode='constant', cval=0.)
    return np.clip(out, 0., 1.)


def rotation_matrix(degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.], [s, c, 0.], [0., 0., 1.]])


def affine_matrix(translate: Tuple[float, float], scale: float, shear_deg: float) -> np.ndarray:
    r'''Scale, then shear along columns, then translate (translate given in pixels as (dy, dx))'''
    shear = math.tan(math.radians(shear_deg))
    return np.array([[scale, 0., translate[0]],
                     [scale * shear, scale, translate[1]],
                     [0., 0., 1.]])


def augment(img: ImageGray, cfg: AugmentConfig, rng: np.random.Generator) -> ImageGray:
    r'''Rotation, horizontal flip, brightness, contrast, random affine, in that order.

        Every random variate is drawn on every call (so a config change never shifts the
        stream of later draws); a step whose draw is the identity is skipped, which makes
        the all-zero config return the input unchanged.'''
    angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
    flip = rng.random() < cfg.hflip_prob
    brightness = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter)
    contrast = rng.uniform(1. - cfg.contrast_jitter, 1. + cfg.contrast_jitter)
    max_shift = np.array(img.pixels.shape, dtype=np.float64) * cfg.affine_translate_frac
    shift = (rng.uniform(-max_shift[0], max_shift[0]), rng.uniform(-max_shift[1], max_shift[1]))
    scale = rng.uniform(*cfg.affine_scale_range)
    shear = rng.uniform(-cfg.affine_shear_max_deg, cfg.affine_shear_max_deg)

    pixels = img.pixels
    if angle != 0.:
        pixels = _warp(pixels, rotation_matrix(angle))
    if flip:
        pixels = pixels[:, ::-1]
    if brightness != 0.:
        pixels = np.clip(pixels + brightness, 0., 1.)
    if contrast != 1.:
        mean = pixels.mean()
        pixels = np.clip(mean + (pixels - mean) * contrast, 0., 1.)
    if shift != (0., 0.) or scale != 1. or shear != 0.:
        pixels = _warp(pixels, affine_matrix(shift, scale, shear))
    return ImageGray(pixels)
