import pytest

from trilocrab.atlas import (
    AtlasError,
    bundled_atlas_path,
    default_atlas_path,
    load_atlas,
    load_atlas_file,
    validate_atlas,
)
from trilocrab.mutations import MUTATIONS

TEXT = bundled_atlas_path().read_text()


def test_bundled_atlas_is_valid(atlas):
    rep = validate_atlas(atlas)
    assert rep.ok, rep.violations
    assert len(atlas.oriented_classes()) == 8
    assert len(atlas.states()) == 20


def test_corner_rules_are_rotation_closed(atlas):
    for t in atlas.corner_rules:
        assert atlas.rotate_tuple(t) in atlas.corner_rules


def test_digest_tracks_the_text(atlas):
    assert load_atlas(TEXT).digest == atlas.digest
    assert load_atlas(TEXT + "\n# edited\n").digest != atlas.digest


@pytest.mark.parametrize("bad, where", [
    ("[colours]\n", "unknown section"),
    ("[parity]\n", "duplicate section"),
])
def test_section_errors(bad, where):
    with pytest.raises(AtlasError, match=where) as exc:
        load_atlas(TEXT + bad)
    assert exc.value.line > 0


def test_undeclared_label_reports_position():
    text = TEXT.replace("allow C.ne.2 C.ne.3 C.ne.0 C.nw.0", "allow C.ne.2 C.ne.3 C.ne.0 NOPE", 1)
    with pytest.raises(AtlasError, match="undeclared decoration 'NOPE'") as exc:
        load_atlas(text)
    assert exc.value.line > 0 and exc.value.column > 0


def test_missing_section():
    start = TEXT.index("[parity]")
    end = TEXT.index("[supertile]")
    with pytest.raises(AtlasError, match="missing section"):
        load_atlas(TEXT[:start] + TEXT[end:])


def test_env_var_selects_atlas(tmp_path, monkeypatch):
    p = tmp_path / "mine.atlas"
    p.write_text(TEXT.replace("name trilobite-crab", "name mine", 1))
    monkeypatch.setenv("TRILOCRAB_ATLAS", str(p))
    assert default_atlas_path() == p
    monkeypatch.delenv("TRILOCRAB_ATLAS")
    assert default_atlas_path() == bundled_atlas_path()


@pytest.mark.parametrize("name, message", [
    ("drop-one-tuple", "not closed under rotation"),
    ("permit-all-blank", "all-BLANK"),
])
def test_validation_catches_mutations(name, message):
    rep = validate_atlas(load_atlas(MUTATIONS[name](TEXT)))
    assert not rep.ok
    assert any(message in v for v in rep.violations)


def test_rotation_closed_mutations_pass_validation():
    # these two are only caught further down the pipeline
    for name in ("drop-tuple-orbit", "weaken-parity"):
        assert validate_atlas(load_atlas(MUTATIONS[name](TEXT))).ok, name


def test_load_atlas_file_default_is_bundled(atlas):
    assert load_atlas_file(None).digest == atlas.digest
