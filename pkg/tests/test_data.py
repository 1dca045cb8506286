import json
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from smokeynet.data import (
    ANNOTATION_FILE,
    AnnotationSet,
    ArchiveError,
    FireSequence,
    FrameNameError,
    FrameRecord,
    ManifestError,
    SupervisionKind,
    camera_from_fire_id,
    frame_name,
    index_archive,
    label_from_offset,
    load_split_manifest,
    missing_offsets,
    parse_frame_offset,
    parse_split_manifest,
    read_annotations,
    resolve_supervision,
    write_annotations,
    write_split_manifest,
)


@pytest.mark.parametrize("token,offset", [("+00060", 60), ("-02400", -2400), ("+00000", 0)])
def test_parse_frame_offset(token, offset):
    assert parse_frame_offset(f"1563305245_{token}.jpg") == offset


@given(st.integers(-99999, 99999), st.integers(0, 2**31), st.sampled_from([".jpg", ".png", ".jpeg"]))
def test_frame_name_round_trip(offset, ts, suffix):
    assert parse_frame_offset(frame_name(ts, offset, suffix)) == offset


def test_parse_frame_offset_names_the_file():
    with pytest.raises(FrameNameError, match="no_offset.jpg"):
        parse_frame_offset("no_offset.jpg")


def test_custom_pattern():
    assert parse_frame_offset("cam1_t=-120s.jpg", r"t=(?P<offset>[+-]?\d+)s") == -120


@pytest.mark.parametrize("offset,label", [(-2400, 0), (-60, 0), (0, 1), (60, 1), (2400, 1)])
def test_label_from_offset(offset, label):
    assert label_from_offset(offset) == label


def test_camera_from_fire_id():
    assert camera_from_fire_id("20190610_FIRE_sm-n-mobo-c") == ("sm-n-mobo-c", "sm")
    assert camera_from_fire_id("odd") == ("odd", None)


def test_missing_offsets():
    nominal = range(-180, 181, 60)
    assert missing_offsets([-180, -120, 0, 61, 180], nominal) == (-60, 120)
    assert missing_offsets(list(nominal), nominal) == ()


def _frame(offset, ann=None):
    return FrameRecord(f"f{offset}", offset, None, label_from_offset(offset), ann)


def test_resolve_supervision():
    contour = AnnotationSet(contours=(((0, 0), (4, 0), (0, 4)),))
    boxes = AnnotationSet(boxes=((0, 0, 4, 4),))
    assert resolve_supervision(_frame(60, contour)) is SupervisionKind.CONTOUR
    assert resolve_supervision(_frame(60, boxes)) is SupervisionKind.BOX_FILL
    assert resolve_supervision(_frame(60)) is SupervisionKind.EXCLUDED
    assert resolve_supervision(_frame(60, AnnotationSet())) is SupervisionKind.EXCLUDED


@given(st.integers(-2400, -1), st.booleans())
def test_negative_frames_never_excluded(offset, annotated):
    ann = AnnotationSet(boxes=((0, 0, 1, 1),)) if annotated else None
    assert resolve_supervision(_frame(offset, ann)) is not SupervisionKind.EXCLUDED


def test_annotation_round_trip(tmp_path):
    anns = {
        "a": AnnotationSet(contours=(((1.5, 2.0), (3.0, 4.0), (5.0, 1.0)),)),
        "b": AnnotationSet(boxes=((1.0, 2.0, 3.0, 4.0),)),
    }
    write_annotations(tmp_path / ANNOTATION_FILE, anns)
    assert read_annotations(tmp_path / ANNOTATION_FILE) == anns
    doc = json.loads((tmp_path / ANNOTATION_FILE).read_text())
    assert set(doc["frames"]) == {"a", "b"}


def test_annotation_validate():
    AnnotationSet(contours=(((0, 0), (10, 0), (0, 10)),)).validate(10, 10)
    with pytest.raises(ValueError):
        AnnotationSet(contours=(((0, 0), (11, 0), (0, 10)),)).validate(10, 10)
    with pytest.raises(ValueError):
        AnnotationSet(boxes=((5, 0, 1, 1),)).validate(10, 10)
    with pytest.raises(ValueError):
        AnnotationSet.from_json({"boxes": [[1, 2, 3]]})


def test_fire_sequence_must_be_ordered():
    with pytest.raises(ValueError):
        FireSequence("f", "c", [_frame(60), _frame(0)])


def _touch(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"")


def test_index_archive_skips_unparsable_and_sorts(tmp_path, caplog):
    fire = tmp_path / "20200101_Test_ab-n-mobo-c"
    for off in (120, -60, 0):
        _touch(fire / frame_name(1_000 + off, off))
    _touch(fire / "thumbnail.jpg")
    _touch(fire / "notes.txt")
    with caplog.at_level(logging.WARNING):
        [seq] = index_archive(tmp_path, nominal=range(-60, 121, 60))
    assert [f.offset_seconds for f in seq.frames] == [-60, 0, 120]
    assert [f.image_label for f in seq.frames] == [0, 1, 1]
    assert seq.skipped_files == ("thumbnail.jpg",)
    assert seq.missing_offsets == (60,)
    assert seq.camera_id == "ab-n-mobo-c" and seq.station == "ab"
    assert "thumbnail.jpg" in caplog.text


def test_index_archive_attaches_annotations(tmp_path):
    fire = tmp_path / "fireA"
    name = frame_name(5, 60, ".png")
    _touch(fire / name)
    ann = AnnotationSet(boxes=((0, 0, 2, 2),))
    write_annotations(fire / ANNOTATION_FILE, {name[:-4]: ann})
    [seq] = index_archive(tmp_path)
    assert seq.frames[0].annotation == ann


def test_index_archive_empty_and_unreadable(tmp_path):
    assert index_archive(tmp_path) == []
    with pytest.raises(ArchiveError):
        index_archive(tmp_path / "missing")


def test_index_archive_order_independent_of_creation(tmp_path):
    for name in ("zeta", "alpha", "mid"):
        _touch(tmp_path / name / frame_name(0, 0))
    assert [f.fire_id for f in index_archive(tmp_path)] == ["alpha", "mid", "zeta"]


MANIFEST = """
# comment
[train]
a
b
[val]
c   # trailing comment
[test]
d
[omit]
"""


def test_parse_split_manifest():
    s = parse_split_manifest(MANIFEST)
    assert s == {"train": ["a", "b"], "val": ["c"], "test": ["d"], "omit": []}
    with pytest.raises(ManifestError):
        parse_split_manifest("orphan\n[train]\n")
    with pytest.raises(ManifestError):
        parse_split_manifest("[holdout]\nx\n")


def _index(tmp_path, fires, frames=2):
    for f in fires:
        for off in range(frames):
            _touch(tmp_path / f / frame_name(off, off * 60))
    return index_archive(tmp_path)


def test_load_split_manifest_counts(tmp_path):
    index = _index(tmp_path / "arc", "abcd")
    (tmp_path / "m.txt").write_text(MANIFEST)
    m = load_split_manifest(tmp_path / "m.txt", index)
    assert m.counts == {"train": (2, 4), "val": (1, 2), "test": (1, 2), "omit": (0, 0)}
    assert m.split_of("c") == "val" and m.split_of("zz") is None


def test_manifest_overlap_rejected(tmp_path):
    (tmp_path / "m.txt").write_text("[train]\na\n[test]\na\n")
    with pytest.raises(ManifestError, match="a \\(train, test\\)"):
        load_split_manifest(tmp_path / "m.txt")


def test_manifest_unknown_and_unlisted_fires(tmp_path):
    index = _index(tmp_path / "arc", "ab")
    (tmp_path / "m.txt").write_text("[train]\na\nghost\n")
    with pytest.raises(ManifestError, match="ghost"):
        load_split_manifest(tmp_path / "m.txt", index)
    (tmp_path / "m.txt").write_text("[train]\na\n")
    with pytest.raises(ManifestError, match="b"):
        load_split_manifest(tmp_path / "m.txt", index)
    assert load_split_manifest(tmp_path / "m.txt", index, require_coverage=False).train_fires == {"a"}


def test_write_split_manifest_round_trip(tmp_path):
    splits = {"train": ["b", "a"], "val": ["c"], "test": [], "omit": ["d"]}
    write_split_manifest(tmp_path / "m.txt", splits)
    parsed = parse_split_manifest((tmp_path / "m.txt").read_text())
    assert parsed == {k: sorted(v) for k, v in splits.items()}


def test_synthetic_manifest_2_1_1_0(small_corpus):
    index = index_archive(small_corpus.root)
    m = load_split_manifest(small_corpus.manifest, index)
    assert [m.counts[k][0] for k in ("train", "val", "test", "omit")] == [2, 1, 1, 0]
    assert sum(c[1] for c in m.counts.values()) == sum(len(f) for f in index)
