"""Grayscale image container and the pixel-level operations.

Images are row-major float arrays of levels in [0, 255].  Everything here is
plain numpy: bilinear resampling, the 4-neighbor Laplacian, the sharpness
gate built on it, the detection pyramid, eye-region cropping, and the random
crop-and-resize augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)

DEFAULT_PIXEL_THRESHOLD = 30.0
SHARPNESS_COUNT_FRACTION = 0.005


@dataclass
class GrayImage:
    """(height, width) float64 levels in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if not np.isfinite(self.pixels).all():
            raise ValueError("pixels contain non-finite values")
        if (self.pixels < 0.0).any() or (self.pixels > 255.0).any():
            raise ValueError("levels must lie in [0, 255]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM file with maxval <= 255."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    width, height, maxval = (int(next_token()) for _ in range(3))
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: raster truncated")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels.astype(np.float64))


def write_pgm(img: GrayImage, path):
    """Write a binary (P5) PGM, rounding levels to the nearest integer."""
    levels = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def bilinear_resize(img: GrayImage, new_width: int, new_height: int) -> GrayImage:
    """Resample with bilinear interpolation (half-pixel centers, edge clamp)."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target size must be positive")
    p = img.pixels
    sx = np.clip((np.arange(new_width) + 0.5) * (img.width / new_width) - 0.5,
                 0.0, img.width - 1.0)
    sy = np.clip((np.arange(new_height) + 0.5) * (img.height / new_height) - 0.5,
                 0.0, img.height - 1.0)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = sx - x0
    fy = (sy - y0)[:, None]
    top = p[np.ix_(y0, x0)] * (1.0 - fx) + p[np.ix_(y0, x1)] * fx
    bottom = p[np.ix_(y1, x0)] * (1.0 - fx) + p[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bottom * fy
    return GrayImage(np.clip(out, 0.0, 255.0))


def laplacian(img: GrayImage) -> np.ndarray:
    """Valid 4-neighbor Laplacian responses, shape (height-2, width-2).

    Responses are signed (an isolated bright pixel gives -4*255 at its
    center), so this returns a raw array rather than an image.
    """
    if img.height < 3 or img.width < 3:
        raise ValueError("image must be at least 3x3")
    p = img.pixels
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]
            - 4.0 * p[1:-1, 1:-1])


def sharpness_gate(img: GrayImage, pixel_threshold: float = DEFAULT_PIXEL_THRESHOLD,
                   count_threshold: int | None = None) -> tuple[bool, int]:
    """Count strong Laplacian responses and compare against a minimum.

    A pixel counts when |response| >= pixel_threshold; the image passes when
    the count reaches count_threshold (default: 0.5% of the pixel count,
    at least 1).  Returns (passed, edge_count).
    """
    if count_threshold is None:
        count_threshold = max(1, int(round(SHARPNESS_COUNT_FRACTION * img.width * img.height)))
    responses = laplacian(img)
    edge_count = int((np.abs(responses) >= pixel_threshold).sum())
    return edge_count >= count_threshold, edge_count


def image_pyramid(img: GrayImage, min_face: float, scale_factor: float = 0.709,
                  window: int = 12) -> list[tuple[GrayImage, float]]:
    """Scaled copies for a sliding-window scan.

    The first scale maps a min_face-sized region onto the window size; each
    further level shrinks by scale_factor, and levels are kept while the
    scaled short side still covers one window.
    """
    if min_face <= 0.0:
        raise ValueError("min_face must be positive")
    if not 0.0 < scale_factor < 1.0:
        raise ValueError("scale_factor must lie in (0, 1)")
    levels = []
    scale = window / min_face
    while min(img.width, img.height) * scale >= window:
        w = max(1, int(round(img.width * scale)))
        h = max(1, int(round(img.height * scale)))
        levels.append((bilinear_resize(img, w, h), scale))
        scale *= scale_factor
    return levels


def crop_region(img: GrayImage, x1: float, y1: float, x2: float, y2: float) -> GrayImage:
    """Integer crop of a float box, clamped to the image bounds."""
    ix1 = int(np.clip(np.floor(x1), 0, img.width - 1))
    iy1 = int(np.clip(np.floor(y1), 0, img.height - 1))
    ix2 = int(np.clip(np.ceil(x2), ix1 + 1, img.width))
    iy2 = int(np.clip(np.ceil(y2), iy1 + 1, img.height))
    return GrayImage(img.pixels[iy1:iy2, ix1:ix2].copy())


def rotate_region(img: GrayImage, center, angle: float,
                  x1: int, y1: int, x2: int, y2: int) -> GrayImage:
    """Resample the rectangle [x1,x2) x [y1,y2) from the image rotated by
    -angle about center (bilinear, edge clamp).

    Output pixel (x, y) reads the source at R(angle)·((x,y) - center) + center,
    so content that sat at angle `angle` becomes horizontal.
    """
    cx, cy = float(center[0]), float(center[1])
    xs = np.arange(x1, x2, dtype=np.float64)
    ys = np.arange(y1, y2, dtype=np.float64)
    gx, gy = np.meshgrid(xs - cx, ys - cy)
    ca, sa = np.cos(angle), np.sin(angle)
    src_x = np.clip(ca * gx - sa * gy + cx, 0.0, img.width - 1.0)
    src_y = np.clip(sa * gx + ca * gy + cy, 0.0, img.height - 1.0)
    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    x1i = np.minimum(x0 + 1, img.width - 1)
    y1i = np.minimum(y0 + 1, img.height - 1)
    fx = src_x - x0
    fy = src_y - y0
    p = img.pixels
    out = ((1 - fy) * ((1 - fx) * p[y0, x0] + fx * p[y0, x1i])
           + fy * ((1 - fx) * p[y1i, x0] + fx * p[y1i, x1i]))
    return GrayImage(np.clip(out, 0.0, 255.0))


def eye_crops(face: GrayImage, left_center, right_center) -> tuple[GrayImage, GrayImage]:
    """Fixed-size eye regions around two landmarks inside a face crop.

    Crop size is (width//6) x (height//10) of the face crop (floored, at
    least 1 px); windows are centered on each landmark and shifted inside the
    face bounds when the landmark sits near an edge.
    """
    cw = max(1, face.width // 6)
    ch = max(1, face.height // 10)

    def crop_at(center):
        x0 = int(np.clip(int(round(center[0])) - cw // 2, 0, face.width - cw))
        y0 = int(np.clip(int(round(center[1])) - ch // 2, 0, face.height - ch))
        return GrayImage(face.pixels[y0 : y0 + ch, x0 : x0 + cw].copy())

    return crop_at(left_center), crop_at(right_center)


def random_resized_crop(img: GrayImage, out_width: int, out_height: int,
                        rng: np.random.Generator) -> GrayImage:
    """Crop a random region at least as large as the output, then resize.

    Crop width/height are drawn uniformly from [out, full]; the position is
    uniform over valid offsets.  With out size equal to the image size the
    only possible crop is the whole image and the result is the identity.
    """
    if out_width > img.width or out_height > img.height:
        raise ValueError("output size exceeds image size")
    if out_width < 1 or out_height < 1:
        raise ValueError("output size must be positive")
    cw = int(rng.integers(out_width, img.width + 1))
    ch = int(rng.integers(out_height, img.height + 1))
    x0 = int(rng.integers(0, img.width - cw + 1))
    y0 = int(rng.integers(0, img.height - ch + 1))
    crop = GrayImage(img.pixels[y0 : y0 + ch, x0 : x0 + cw].copy())
    if (cw, ch) == (out_width, out_height):
        return crop
    return bilinear_resize(crop, out_width, out_height)
