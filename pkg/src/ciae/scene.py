"""Ground-truth panoptic scenes: data model, synthetic generator, file I/O."""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FormatError, InfeasibleConfig

VOID_ID = 65535
SCENE_FORMAT = "ciae-scene/1"
MIN_THING_AREA = 4


@dataclass(frozen=True)
class LabelSpace:
    """Category ids ``0..num_stuff-1`` are stuff, the following ``num_thing`` are things."""

    num_stuff: int
    num_thing: int
    merge_things: bool = True

    def __post_init__(self):
        if self.num_stuff < 1 or self.num_thing < 0:
            raise InfeasibleConfig(f"invalid label space {self}")

    @property
    def num_categories(self):
        return self.num_stuff + self.num_thing

    def is_thing(self, category):
        return category >= self.num_stuff

    @property
    def num_memory_slots(self):
        """Memory bank size: things share one slot when merged."""
        if self.merge_things:
            return self.num_stuff + 1
        return self.num_categories

    def memory_slot(self, category):
        if self.merge_things and category >= self.num_stuff:
            return self.num_stuff
        return category


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: int
    category: int
    is_thing: bool
    bbox: tuple  # (x_min, y_min, x_max, y_max), half-open
    area: int


def bbox_of(mask):
    ys, xs = np.nonzero(mask)
    return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


@dataclass(eq=False)
class PanopticScene:
    semantic_map: np.ndarray
    segment_map: np.ndarray
    segments: list
    label_space: LabelSpace
    void_id: int = VOID_ID

    @property
    def height(self):
        return self.segment_map.shape[0]

    @property
    def width(self):
        return self.segment_map.shape[1]

    def segment(self, segment_id):
        for seg in self.segments:
            if seg.segment_id == segment_id:
                return seg
        raise KeyError(segment_id)

    @property
    def things(self):
        return [s for s in self.segments if s.is_thing]

    @property
    def stuff(self):
        return [s for s in self.segments if not s.is_thing]

    def __eq__(self, other):
        if not isinstance(other, PanopticScene):
            return NotImplemented
        return (
            self.label_space == other.label_space
            and self.void_id == other.void_id
            and self.segments == other.segments
            and np.array_equal(self.semantic_map, other.semantic_map)
            and np.array_equal(self.segment_map, other.segment_map)
        )


@dataclass
class SceneGenConfig:
    height: int = 32
    width: int = 32
    num_stuff_regions: int = 3
    num_things: int = 4
    num_stuff_classes: int = 4
    num_thing_classes: int = 3
    merge_things: bool = True
    shape: str = "rectangle"  # or "ellipse"
    size_range: tuple = (0.15, 0.4)
    force_overlap: bool = False
    seed: int = 0

    def validate(self):
        if self.height < 1 or self.width < 1:
            raise InfeasibleConfig("image dimensions must be positive")
        if self.num_stuff_regions < 1 or self.num_things < 0:
            raise InfeasibleConfig("num_stuff_regions must be >= 1, num_things >= 0")
        if self.num_stuff_regions > self.height:
            raise InfeasibleConfig(
                f"num_stuff_regions={self.num_stuff_regions} exceeds height={self.height}"
            )
        if self.num_stuff_regions > self.num_stuff_classes:
            raise InfeasibleConfig("need a distinct stuff class for every band")
        if self.num_things > 0 and self.num_thing_classes < 1:
            raise InfeasibleConfig("things requested but no thing classes")
        lo, hi = self.size_range
        if not (0 < lo <= hi <= 1):
            raise InfeasibleConfig(f"size_range {self.size_range} not within (0, 1]")
        if self.shape not in ("rectangle", "ellipse"):
            raise InfeasibleConfig(f"unknown shape {self.shape!r}")


def _thing_mask(rng, cfg, anchor):
    H, W = cfg.height, cfg.width
    lo, hi = cfg.size_range
    h = max(1, int(round(rng.uniform(lo, hi) * H)))
    w = max(1, int(round(rng.uniform(lo, hi) * W)))
    if anchor is None:
        y0 = int(rng.integers(0, H - h + 1))
        x0 = int(rng.integers(0, W - w + 1))
    else:
        ax0, ay0, ax1, ay1 = anchor
        cy = int(rng.integers(ay0, ay1))
        cx = int(rng.integers(ax0, ax1))
        y0 = int(np.clip(cy - h // 2, 0, H - h))
        x0 = int(np.clip(cx - w // 2, 0, W - w))
    mask = np.zeros((H, W), dtype=bool)
    if cfg.shape == "rectangle":
        mask[y0:y0 + h, x0:x0 + w] = True
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        ry, rx = h / 2.0, w / 2.0
        inside = ((yy + 0.5 - ry) / ry) ** 2 + ((xx + 0.5 - rx) / rx) ** 2 <= 1.0
        mask[y0:y0 + h, x0:x0 + w] = inside
    return mask


def generate_scene(cfg):
    """Build a deterministic scene: horizontal stuff bands with things painted on top."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    H, W = cfg.height, cfg.width
    space = LabelSpace(cfg.num_stuff_classes, cfg.num_thing_classes, cfg.merge_things)

    band_cats = rng.permutation(cfg.num_stuff_classes)[: cfg.num_stuff_regions]
    band_of_row = (np.arange(H) * cfg.num_stuff_regions) // H
    semantic = np.repeat(band_cats[band_of_row][:, None], W, axis=1).astype(np.int64)
    segment = semantic.copy()

    # painter's algorithm: later things overwrite earlier ones
    owner = np.full((H, W), -1, dtype=np.int64)
    cats = []
    boxes = []
    for j in range(cfg.num_things):
        anchor = boxes[int(rng.integers(len(boxes)))] if (cfg.force_overlap and boxes) else None
        mask = _thing_mask(rng, cfg, anchor)
        cats.append(space.num_stuff + int(rng.integers(cfg.num_thing_classes)))
        boxes.append(bbox_of(mask))
        owner[mask] = j

    next_id = space.num_stuff
    things = []
    for j in range(cfg.num_things):
        mask = owner == j
        area = int(mask.sum())
        if area < MIN_THING_AREA:
            # leftovers return to the stuff underneath
            continue
        semantic[mask] = cats[j]
        segment[mask] = next_id
        things.append(SegmentRecord(next_id, cats[j], True, bbox_of(mask), area))
        next_id += 1

    stuff = []
    for cat in sorted(int(c) for c in np.unique(segment) if c < space.num_stuff):
        mask = segment == cat
        stuff.append(SegmentRecord(cat, cat, False, bbox_of(mask), int(mask.sum())))
    return PanopticScene(semantic, segment, stuff + things, space, VOID_ID)


# ---------------------------------------------------------------- PGM I/O


def write_pgm16(path, array):
    array = np.asarray(array)
    if array.min(initial=0) < 0 or array.max(initial=0) > 65535:
        raise FormatError("values do not fit into 16 bits")
    h, w = array.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(array.astype(">u2").tobytes())


def _pgm_tokens(data):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm16(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header") from exc
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: non-positive dimension {w}x{h}")
    if maxval != 65535:
        raise FormatError(f"{path}: expected maxval 65535, got {maxval}")
    body = data[offset:]
    if len(body) != 2 * w * h:
        raise FormatError(f"{path}: expected {2 * w * h} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype=">u2").reshape(h, w).astype(np.int64)


# ---------------------------------------------------------------- scene files


def _records_to_json(segments):
    return [dict(asdict(s), bbox=list(s.bbox)) for s in segments]


def records_from_json(items):
    try:
        return [
            SegmentRecord(int(s["segment_id"]), int(s["category"]), bool(s["is_thing"]),
                          tuple(int(v) for v in s["bbox"]), int(s["area"]))
            for s in items
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed segment record: {exc}") from exc


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def scene_to_files(scene, path):
    os.makedirs(path, exist_ok=True)
    meta = {
        "format": SCENE_FORMAT,
        "height": scene.height,
        "width": scene.width,
        "label_space": asdict(scene.label_space),
        "void_id": scene.void_id,
        "segments": _records_to_json(scene.segments),
    }
    _dump_json(os.path.join(path, "meta.json"), meta)
    write_pgm16(os.path.join(path, "semantic.pgm"), scene.semantic_map)
    write_pgm16(os.path.join(path, "segment.pgm"), scene.segment_map)


def check_segments(segment_map, segments, void_id, semantic_map=None):
    """Verify rasters and records agree; raise :class:`FormatError` otherwise."""
    by_id = {s.segment_id: s for s in segments}
    if len(by_id) != len(segments):
        raise FormatError("duplicate segment ids")
    ids, counts = np.unique(segment_map, return_counts=True)
    present = dict(zip(ids.tolist(), counts.tolist()))
    for sid in present:
        if sid != void_id and sid not in by_id:
            raise FormatError(f"segment id {sid} in raster has no record")
    for s in segments:
        if present.get(s.segment_id, 0) != s.area:
            raise FormatError(f"segment {s.segment_id}: area mismatch")
        if bbox_of(segment_map == s.segment_id) != s.bbox:
            raise FormatError(f"segment {s.segment_id}: bbox mismatch")
    if semantic_map is not None:
        lut = {sid: s.category for sid, s in by_id.items()}
        lut[void_id] = void_id
        expected = np.vectorize(lut.__getitem__, otypes=[np.int64])(segment_map)
        if not np.array_equal(expected, semantic_map):
            raise FormatError("semantic and segment rasters disagree")


def scene_from_files(path):
    meta_path = os.path.join(path, "meta.json")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{meta_path}: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("format") != SCENE_FORMAT:
        raise FormatError(f"{meta_path}: expected format {SCENE_FORMAT!r}")
    try:
        h, w = int(meta["height"]), int(meta["width"])
        ls = meta["label_space"]
        space = LabelSpace(int(ls["num_stuff"]), int(ls["num_thing"]), bool(ls["merge_things"]))
        void_id = int(meta["void_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{meta_path}: {exc}") from exc
    if h <= 0 or w <= 0:
        raise FormatError(f"{meta_path}: non-positive dimension {w}x{h}")
    segments = records_from_json(meta.get("segments", []))
    semantic = read_pgm16(os.path.join(path, "semantic.pgm"))
    segment = read_pgm16(os.path.join(path, "segment.pgm"))
    if semantic.shape != (h, w) or segment.shape != (h, w):
        raise FormatError("raster dimensions disagree with meta.json")
    check_segments(segment, segments, void_id, semantic)
    return PanopticScene(semantic, segment, segments, space, void_id)


def scene_from_segment_map(segment_map, category_of, label_space, void_id=VOID_ID):
    """Assemble a scene from a segment raster and a ``{segment_id: category}`` lookup."""
    segment_map = np.asarray(segment_map, dtype=np.int64)
    segments = []
    semantic = np.full_like(segment_map, void_id)
    for sid in np.unique(segment_map).tolist():
        if sid == void_id:
            continue
        mask = segment_map == sid
        cat = int(category_of[sid])
        semantic[mask] = cat
        segments.append(SegmentRecord(sid, cat, label_space.is_thing(cat), bbox_of(mask), int(mask.sum())))
    return PanopticScene(semantic, segment_map, segments, label_space, void_id)
