"""Architecture manifest round-trips and parse errors."""

import pytest

from onfire.errors import ManifestParseError
from onfire.manifest import deserialize_arch, load_manifest, save_manifest, serialize_arch
from onfire.zoo import CATALOG, build_arch


def graphs_equal(a, b):
    if a.name != b.name or len(a.nodes) != len(b.nodes):
        return False
    for na, nb in zip(a.nodes, b.nodes):
        if (na.name, na.kind, na.cfg, na.inputs) != (nb.name, nb.kind, nb.cfg, nb.inputs):
            return False
    return True


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_round_trip_identity_all_catalog(name):
    g = build_arch(name)
    again = deserialize_arch(serialize_arch(g))
    assert graphs_equal(g, again)


def test_header_carries_arch_name():
    text = serialize_arch(build_arch("InceptionV3-OnFire"))
    assert text.splitlines()[0] == "ONFIRE-ARCH v1 InceptionV3-OnFire"


def test_truncated_manifest_rejected():
    text = serialize_arch(build_arch("InceptionV2-A3"))
    truncated = "\n".join(text.splitlines()[:-1])  # drop the end marker
    with pytest.raises(ManifestParseError, match="end marker"):
        deserialize_arch(truncated)


def test_malformed_line_reports_number():
    text = "ONFIRE-ARCH v1 x\ninput input h=8 w=8 c=3 inputs=[]\nbroken line\nend 2\n"
    with pytest.raises(ManifestParseError, match="line 3"):
        deserialize_arch(text)


def test_bad_header():
    with pytest.raises(ManifestParseError, match="line 1"):
        deserialize_arch("WRONG v1 x\nend 0\n")


def test_unknown_kind_reports_line():
    text = "ONFIRE-ARCH v1 x\ninput input h=8 w=8 c=3 inputs=[]\nz warp inputs=[input]\nend 2\n"
    with pytest.raises(ManifestParseError, match="line 3"):
        deserialize_arch(text)

def test_end_count_mismatch():
    text = "ONFIRE-ARCH v1 x\ninput input h=8 w=8 c=3 inputs=[]\nend 5\n"
    with pytest.raises(ManifestParseError, match="5 nodes"):
        deserialize_arch(text)


def test_reduced_manifests_differ_only_in_counts():
    # v04 vs v10 (V3): identical rows, reduced flag flips filter counts only.
    a = serialize_arch(build_arch("InceptionV3_v04")).splitlines()
    b = serialize_arch(build_arch("InceptionV3_v10")).splitlines()
    assert len(a) == len(b)
    diffs = [(x, y) for x, y in zip(a[1:], b[1:]) if x != y]
    assert diffs
    for x, y in diffs:
        tx = [t for t in x.split() if not t.startswith("filters=")]
        ty = [t for t in y.split() if not t.startswith("filters=")]
        assert tx == ty


def test_file_round_trip(tmp_path):
    g = build_arch("InceptionV4-OnFire")
    path = tmp_path / "arch.txt"
    save_manifest(g, path)
    assert graphs_equal(g, load_manifest(path))
