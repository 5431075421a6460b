"""The nine injected failure scenarios and ground-truth-tagged corpus
construction.

Pixel transforms (noise, blur, darken, scale) and occlusions (white mask,
sunglasses, eyeglasses, hand, pasted object) operate on 8-bit RGB rasters in
gamma space. Each transform with its identity parameter returns the input
bytes unchanged. `build_failure_corpus` samples correctly-predicted records
(seeded, without replacement, per class for classification tasks), applies
the scenario transform, writes the modified images, and appends manifest
records whose scenario column carries the injected tag; injected records
keep the original prediction, since re-running the DNN on modified images
happens outside this package.

Occlusion geometry is not fully pinned down by any reference rendering, so
every constant (ellipse ratios, band width, outline stroke, hand color and
coverage) is a keyword argument with the documented default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import convolve1d

from .data import Dataset, ImageRecord, Classification, is_failure
from .errors import (
    DataError,
    DeltaTooLargeError,
    InsufficientCorrectImagesError,
    MissingFileError,
    MissingKeypointsError,
    OutOfBoundsError,
    ParseError,
)
from .raster import Raster, Sprite, load_image, save_image
from .seeding import derive_seed, rng_for

SCENARIOS = (
    "noise",
    "blur",
    "darken",
    "scale",
    "mask",
    "sunglasses",
    "eyeglasses",
    "hand",
    "object",
)

OCCLUSION_KINDS = ("mask", "sunglasses", "eyeglasses", "hand")

SKIN_TONE = (224, 172, 105)


# -- keypoints -------------------------------------------------------------


@dataclass(frozen=True)
class KeypointSet:
    """Named facial pixel coordinates; any subset may be present."""

    left_eye: tuple | None = None
    right_eye: tuple | None = None
    nose: tuple | None = None
    mouth: tuple | None = None
    chin: tuple | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            try:
                x, y = value
            except (TypeError, ValueError):
                raise DataError(
                    f"keypoint {f.name} must be an (x, y) pair, got {value!r}"
                ) from None
            object.__setattr__(self, f.name, (float(x), float(y)))

    def require(self, kind: str, names) -> list:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingKeypointsError(kind, missing)
        return [getattr(self, n) for n in names]

    def any_point(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                return value
        return None


def load_keypoints(path) -> dict:
    """JSON `{image_id: {"left_eye": [x, y], ...}}` to KeypointSet per id."""
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"keypoint file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad keypoint file {p.name}: {exc}") from None
    known = {f.name for f in fields(KeypointSet)}
    result = {}
    for image_id, points in raw.items():
        unknown = set(points) - known
        if unknown:
            raise ParseError(
                f"{p.name}: unknown keypoints {sorted(unknown)} for {image_id!r}"
            )
        result[image_id] = KeypointSet(**{k: tuple(v) for k, v in points.items()})
    return result


# -- pixel transforms --------------------------------------------------------


def _clamp_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def add_gaussian_noise(img: Raster, sigma: float = 0.1, seed: int = 0) -> Raster:
    """Additive channel noise: v' = clamp(round(v + 255 g)), g ~ N(0, sigma^2)."""
    if not 0.0 <= sigma <= 1.0:
        raise DataError(f"sigma must be in [0, 1], got {sigma}")
    if sigma == 0:
        return img
    noise = rng_for(seed).normal(0.0, sigma, size=img.array.shape)
    return Raster(_clamp_u8(img.array.astype(np.float64) + 255.0 * noise))


def gaussian_blur(img: Raster, radius: float = 30.0) -> Raster:
    """Separable Gaussian blur, sigma = radius, kernel cut at ceil(3 sigma),
    clamp-to-edge boundary."""
    if radius < 0:
        raise DataError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return img
    half = math.ceil(3.0 * radius)
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * radius * radius))
    kernel /= kernel.sum()
    smoothed = img.array.astype(np.float64)
    smoothed = convolve1d(smoothed, kernel, axis=0, mode="nearest")
    smoothed = convolve1d(smoothed, kernel, axis=1, mode="nearest")
    return Raster(_clamp_u8(smoothed))


def darken(img: Raster, factor: float = 0.3) -> Raster:
    """Scale brightness: v' = clamp(round(v * factor))."""
    if not 0.0 <= factor <= 1.0:
        raise DataError(f"factor must be in [0, 1], got {factor}")
    if factor == 1.0:
        return img
    return Raster(_clamp_u8(img.array.astype(np.float64) * factor))


def default_shrink_delta(width: int, height: int) -> int:
    """The documented piecewise delta: a third of the short side for large
    images (>= 1200 px), 22% for smaller ones."""
    side = min(width, height)
    return round(side / 3) if side >= 1200 else round(0.22 * side)


def scale_shrink(img: Raster, delta: int | None = None) -> Raster:
    """Bilinear-shrink the content by `delta` pixels per side and center it
    on a black canvas of the original size."""
    if delta is None:
        delta = default_shrink_delta(img.width, img.height)
    delta = int(delta)
    if not 0 < delta < min(img.width, img.height):
        raise DeltaTooLargeError(
            f"delta {delta} outside (0, {min(img.width, img.height)})"
        )
    new_w, new_h = img.width - delta, img.height - delta
    content = Image.fromarray(img.array, mode="RGB").resize(
        (new_w, new_h), Image.BILINEAR
    )
    canvas = np.zeros_like(img.array)
    top = (img.height - new_h) // 2
    left = (img.width - new_w) // 2
    canvas[top : top + new_h, left : left + new_w] = np.asarray(content)
    return Raster(canvas)


# -- occlusions --------------------------------------------------------------


def _check_bounds(img: Raster, points, kind: str) -> None:
    for x, y in points:
        if not (0 <= x < img.width and 0 <= y < img.height):
            raise OutOfBoundsError(
                f"{kind}: keypoint ({x}, {y}) outside {img.width}x{img.height}"
            )


def _ellipse_box(center, semi_x: float, semi_y: float):
    cx, cy = center
    return (cx - semi_x, cy - semi_y, cx + semi_x, cy + semi_y)


def overlay_occlusion(
    img: Raster,
    kind: str,
    kp: KeypointSet,
    *,
    eye_axes=(0.35, 0.22),
    band_frac: float = 0.16,
    outline_px: int = 3,
    mask_cheek_frac: float = 0.75,
    hand_color=SKIN_TONE,
    hand_fraction: float = 0.25,
) -> Raster:
    """Draw one of the four face occluders.

    mask: filled white quadrilateral nose -> right cheek -> chin -> left
    cheek (cheeks sit at mouth height, `mask_cheek_frac` of the nose-chin
    distance to each side). sunglasses: filled black ellipses over both
    eyes (semi-axes `eye_axes` of the inter-eye distance) joined by a black
    band. eyeglasses: the same ellipses as `outline_px` black strokes,
    interiors untouched, plus a bridge. hand: a filled skin-tone rounded
    rectangle centered on the first available keypoint, covering
    `hand_fraction` of the image area.
    """
    if kind not in OCCLUSION_KINDS:
        raise DataError(f"unknown occlusion kind {kind!r}")
    canvas = Image.fromarray(img.array, mode="RGB")
    draw = ImageDraw.Draw(canvas)

    if kind == "mask":
        nose, mouth, chin = kp.require(kind, ("nose", "mouth", "chin"))
        _check_bounds(img, (nose, mouth, chin), kind)
        reach = math.dist(nose, chin) * mask_cheek_frac
        left_cheek = (nose[0] - reach, mouth[1])
        right_cheek = (nose[0] + reach, mouth[1])
        draw.polygon(
            [nose, right_cheek, chin, left_cheek], fill=(255, 255, 255)
        )
    elif kind in ("sunglasses", "eyeglasses"):
        left, right = kp.require(kind, ("left_eye", "right_eye"))
        _check_bounds(img, (left, right), kind)
        spread = math.dist(left, right)
        if spread == 0:
            raise DataError(f"{kind}: eye keypoints coincide")
        semi_x, semi_y = eye_axes[0] * spread, eye_axes[1] * spread
        if kind == "sunglasses":
            band = max(1, round(band_frac * spread))
            draw.line([left, right], fill=(0, 0, 0), width=band)
            draw.ellipse(_ellipse_box(left, semi_x, semi_y), fill=(0, 0, 0))
            draw.ellipse(_ellipse_box(right, semi_x, semi_y), fill=(0, 0, 0))
        else:
            draw.ellipse(
                _ellipse_box(left, semi_x, semi_y),
                outline=(0, 0, 0),
                width=outline_px,
            )
            draw.ellipse(
                _ellipse_box(right, semi_x, semi_y),
                outline=(0, 0, 0),
                width=outline_px,
            )
            # Bridge between the inner ellipse edges, clear of both eyes.
            inner_l = min(left, right, key=lambda p: p[0])
            inner_r = max(left, right, key=lambda p: p[0])
            draw.line(
                [
                    (inner_l[0] + semi_x, inner_l[1]),
                    (inner_r[0] - semi_x, inner_r[1]),
                ],
                fill=(0, 0, 0),
                width=outline_px,
            )
    else:  # hand
        anchor = kp.any_point()
        if anchor is None:
            raise MissingKeypointsError(kind, ["any"])
        _check_bounds(img, (anchor,), kind)
        # Rounded rectangle with 1.4:1 aspect sized to the target coverage.
        area = hand_fraction * img.width * img.height
        half_w = math.sqrt(area * 1.4) / 2
        half_h = math.sqrt(area / 1.4) / 2
        box = (
            anchor[0] - half_w,
            anchor[1] - half_h,
            anchor[0] + half_w,
            anchor[1] + half_h,
        )
        draw.rounded_rectangle(
            box, radius=min(half_w, half_h) * 0.5, fill=tuple(hand_color)
        )
    return Raster(np.asarray(canvas))


def paste_object(img: Raster, sprite: Sprite, position) -> Raster:
    """Alpha-composite `sprite` with its top-left corner at `position`."""
    left, top = (int(v) for v in position)
    if (
        left < 0
        or top < 0
        or left + sprite.width > img.width
        or top + sprite.height > img.height
    ):
        raise OutOfBoundsError(
            f"sprite {sprite.width}x{sprite.height} at ({left}, {top}) "
            f"does not fit in {img.width}x{img.height}"
        )
    out = img.array.astype(np.float64).copy()
    region = out[top : top + sprite.height, left : left + sprite.width]
    rgb = sprite.array[:, :, :3].astype(np.float64)
    alpha = sprite.array[:, :, 3:].astype(np.float64) / 255.0
    region[:] = rgb * alpha + region * (1.0 - alpha)
    return Raster(_clamp_u8(out))


def default_object_sprite(side: int) -> Sprite:
    """A flat dark handbag silhouette (body plus handle) used when the
    object scenario has no sprite of its own."""
    if side < 8:
        raise DataError(f"sprite side must be >= 8, got {side}")
    rgba = Image.new("RGBA", (side, side), (0, 0, 0, 0))
    draw = ImageDraw.Draw(rgba)
    body_top = round(side * 0.35)
    draw.rounded_rectangle(
        (0, body_top, side - 1, side - 1),
        radius=round(side * 0.12),
        fill=(72, 48, 32, 255),
    )
    draw.arc(
        (round(side * 0.2), 0, round(side * 0.8), round(side * 0.7)),
        start=180,
        end=360,
        fill=(72, 48, 32, 255),
        width=max(2, round(side * 0.06)),
    )
    return Sprite(np.asarray(rgba))


# -- corpus construction -----------------------------------------------------


@dataclass(frozen=True)
class InjectionPlan:
    """Scenario quotas (per class for classification, total for regression)
    plus the master sampling seed."""

    seed: int
    scenarios: tuple  # of (tag, kind, count); kind is "per_class" or "total"

    def __post_init__(self):
        entries = []
        seen = set()
        for entry in self.scenarios:
            try:
                tag, kind, count = entry
            except (TypeError, ValueError):
                # Also rejects mappings passed directly; use plan_from_dict.
                raise DataError(
                    "plan scenarios must be (tag, kind, count) triples"
                ) from None
            if tag not in SCENARIOS:
                raise DataError(f"unknown scenario tag {tag!r}")
            if tag in seen:
                raise DataError(f"duplicate scenario tag {tag!r}")
            seen.add(tag)
            if kind not in ("per_class", "total"):
                raise DataError(f"unknown quota kind {kind!r}")
            count = int(count)
            if count < 0:
                raise DataError(f"scenario {tag!r}: count must be >= 0")
            entries.append((tag, kind, count))
        if not entries:
            raise DataError("plan has no scenarios")
        object.__setattr__(self, "scenarios", tuple(entries))


def plan_from_dict(raw) -> InjectionPlan:
    try:
        seed = int(raw["seed"])
        scenarios = raw["scenarios"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad injection plan: {exc}") from None
    entries = []
    for tag, quota in scenarios.items():
        if not isinstance(quota, dict) or len(quota) != 1:
            raise ParseError(
                f"scenario {tag!r}: quota must be {{'per_class': n}} or "
                f"{{'total': n}}"
            )
        (kind, count), = quota.items()
        entries.append((tag, kind, count))
    return InjectionPlan(seed=seed, scenarios=tuple(entries))


def load_plan(path) -> InjectionPlan:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"plan file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad plan file {p.name}: {exc}") from None
    return plan_from_dict(raw)


_OCCLUSION_NEEDS = {
    "mask": ("nose", "mouth", "chin"),
    "sunglasses": ("left_eye", "right_eye"),
    "eyeglasses": ("left_eye", "right_eye"),
    "hand": (),
}


def _eligible(record, task, tag, keypoints) -> bool:
    if is_failure(record, task):
        return False
    if tag in _OCCLUSION_NEEDS:
        kp = keypoints.get(record.id)
        if kp is None:
            return False
        needs = _OCCLUSION_NEEDS[tag]
        if needs and any(getattr(kp, n) is None for n in needs):
            return False
        if not needs and kp.any_point() is None:
            return False
    return True


def _apply_scenario(tag, img, record, keypoints, plan_seed):
    if tag == "noise":
        return add_gaussian_noise(img, seed=derive_seed(plan_seed, tag, record.id))
    if tag == "blur":
        return gaussian_blur(img)
    if tag == "darken":
        return darken(img)
    if tag == "scale":
        return scale_shrink(img)
    if tag in OCCLUSION_KINDS:
        return overlay_occlusion(img, tag, keypoints[record.id])
    # object: default sprite at a third of the short side, seeded placement
    side = max(8, round(min(img.width, img.height) / 3))
    sprite = default_object_sprite(side)
    rng = rng_for(derive_seed(plan_seed, tag, record.id))
    left = int(rng.integers(0, img.width - sprite.width + 1))
    top = int(rng.integers(0, img.height - sprite.height + 1))
    return paste_object(img, sprite, (left, top))


def build_failure_corpus(
    d: Dataset, images_dir, keypoints, plan: InjectionPlan, out_dir
) -> Dataset:
    """Inject every planned scenario and return the combined manifest.

    Sampling draws only correctly-predicted records, without replacement,
    from candidates sorted by id; classification tasks fill the quota per
    class label, regression tasks in total. Each (scenario, class) draw uses
    its own sub-seed, so plans are reproducible and editing one quota never
    reshuffles another. New records are tagged `{orig}__{scenario}` and the
    originals pass through untouched.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keypoints = dict(keypoints or {})
    new_records = []
    for tag, kind, count in plan.scenarios:
        if count == 0:
            continue
        pool = [r for r in d.records if _eligible(r, d.task, tag, keypoints)]
        if isinstance(d.task, Classification) and kind == "per_class":
            groups = {}
            for r in pool:
                groups.setdefault(r.true_output, []).append(r)
            group_items = sorted(groups.items(), key=lambda kv: str(kv[0]))
        else:
            group_items = [(None, pool)]
        for label, members in group_items:
            members = sorted(members, key=lambda r: r.id)
            if len(members) < count:
                raise InsufficientCorrectImagesError(
                    tag, None if label is None else str(label), count, len(members)
                )
            rng = (
                rng_for(derive_seed(plan.seed, tag))
                if label is None
                else rng_for(derive_seed(plan.seed, tag, str(label)))
            )
            chosen = rng.choice(len(members), size=count, replace=False)
            for idx in sorted(int(i) for i in chosen):
                record = members[idx]
                source = images_dir / (record.path or f"{record.id}.png")
                img = load_image(source)
                modified = _apply_scenario(tag, img, record, keypoints, plan.seed)
                new_id = f"{record.id}__{tag}"
                file_name = f"{new_id}.png"
                save_image(modified, out_dir / file_name)
                new_records.append(
                    ImageRecord(
                        id=new_id,
                        true_output=record.true_output,
                        predicted_output=record.predicted_output,
                        path=file_name,
                        scenario=tag,
                    )
                )
    return Dataset(tuple([*d.records, *new_records]), d.task)
