import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p3fres import datasets
from p3fres.bvd import mbvd_admittance
from p3fres.io import (Network, SingularConversionError, TouchstoneError, TraceCsvError, dumps_json, dut_admittance,
                       embed_admittance, parse_touchstone, read_trace, read_trace_csv, s_to_y, serialize_touchstone,
                       write_trace_csv, y_to_s)
from p3fres.metrics import extract_report
from p3fres.trace import AdmittanceTrace


def random_network(n_ports, n, seed, passive=True):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((n, n_ports, n_ports)) + 1j * rng.standard_normal((n, n_ports, n_ports))
    if passive:
        # scale each matrix to spectral norm < 1
        s *= 0.9 / np.linalg.norm(s, ord=2, axis=(1, 2))[:, None, None]
    f = np.sort(rng.uniform(1e8, 7e10, n))
    return Network(f, s, 50.0)


# --- parse_touchstone ---------------------------------------------------------------

def test_ri_one_port_zero():
    net = parse_touchstone("# Hz S RI R 50\n1e9 0 0\n")
    assert net.n_ports == 1
    assert net.freqs.tolist() == [1e9]
    assert net.s[0, 0, 0] == 0j


def test_ma_ninety_degrees_is_exactly_j():
    net = parse_touchstone("# Hz S MA R 50\n1e9 1.0 90\n")
    assert net.s[0, 0, 0] == 1j


def test_db_minus_twenty_is_exactly_a_tenth():
    net = parse_touchstone("# Hz S DB R 50\n1e9 -20 0\n")
    assert net.s[0, 0, 0] == 0.1 + 0j


def test_option_defaults_ghz_ma_50():
    net = parse_touchstone("#\n1.5 0.5 180\n")
    assert net.freqs[0] == 1.5e9
    assert net.s[0, 0, 0] == -0.5
    assert net.z0 == 50.0


def test_two_port_column_order():
    text = "! comment\n# GHz S RI R 75\n1 0.11 0.12 0.21 0.22 0.31 0.32 0.41 0.42 ! trailing\n"
    net = parse_touchstone(text, n_ports=2)
    assert net.z0 == 75.0
    s = net.s[0]
    assert s[0, 0] == 0.11 + 0.12j
    assert s[1, 0] == 0.21 + 0.22j  # S21 comes second
    assert s[0, 1] == 0.31 + 0.32j
    assert s[1, 1] == 0.41 + 0.42j


@pytest.mark.parametrize("unit, scale", [("Hz", 1), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)])
def test_frequency_units(unit, scale):
    net = parse_touchstone(f"# {unit} S RI R 50\n2.5 0 0\n")
    assert net.freqs[0] == 2.5 * scale


@settings(max_examples=100)
@given(digits=st.lists(st.integers(1, 10 ** 12), min_size=1, max_size=20, unique=True))
def test_unit_normalisation_is_exact(digits):
    vals = sorted(digits)
    ghz = "# GHz S RI R 50\n" + "".join(f"{v / 1000:.3f} 0.1 0.2\n" for v in vals)
    hz = "# Hz S RI R 50\n" + "".join(f"{v}000000 0.1 0.2\n" for v in vals)
    a, b = parse_touchstone(ghz), parse_touchstone(hz)
    assert np.array_equal(a.freqs, b.freqs)
    assert np.array_equal(a.s, b.s)


@pytest.mark.parametrize("text, pattern, line", [
    ("1e9 0 0\n", "data before the option line", 1),
    ("! only comments\n", "missing option line", None),
    ("# Hz S RI R 50\n# Hz S RI R 50\n1e9 0 0\n", "duplicate option line", 2),
    ("# Hz S RI R 50\n1e9 0 zero\n", "non-numeric token 'zero'", 2),
    ("# Hz S RI R 50\n2e9 0 0\n1e9 0 0\n", "strictly ascending", 3),
    ("# Hz S RI R 50\n1e9 0 0\n2e9 0 0 0\n", "expected 3 columns", 3),
    ("# Hz Y RI R 50\n1e9 0 0\n", "only S-parameter", 1),
    ("[Version] 2.0\n# Hz S RI R 50\n", "v2", 1),
    ("# Hz S RI R -5\n", "must be > 0", 1),
])
def test_parse_errors(text, pattern, line):
    with pytest.raises(TouchstoneError, match=pattern) as e:
        parse_touchstone(text)
    assert e.value.line == line
    if line is not None:
        assert f"line {line}" in str(e.value)


def test_wrong_column_count_for_declared_ports():
    with pytest.raises(TouchstoneError, match="expected 9 columns"):
        parse_touchstone("# Hz S RI R 50\n1e9 0 0\n", n_ports=2)


# --- serialize_touchstone ------------------------------------------------------------

@pytest.mark.parametrize("text", ["# Hz S RI R 50\n1e9 0 0\n", "# Hz S MA R 50\n1e9 1.0 90\n",
                                  "# Hz S DB R 50\n1e9 -20 0\n"])
def test_trivial_round_trips_bit_equal(text):
    net = parse_touchstone(text)
    back = parse_touchstone(serialize_touchstone(net))
    assert np.array_equal(back.freqs, net.freqs)
    assert np.array_equal(back.s, net.s)


@pytest.mark.parametrize("n_ports", [1, 2])
def test_random_round_trip_within_1e12(n_ports):
    net = random_network(n_ports, 201, seed=20)
    back = parse_touchstone(serialize_touchstone(net))
    assert np.max(np.abs(back.freqs / net.freqs - 1)) < 1e-12
    assert np.max(np.abs(back.s - net.s)) < 1e-12


@pytest.mark.parametrize("fmt", ["MA", "DB"])
def test_polar_formats_round_trip(fmt):
    net = random_network(2, 51, seed=3)
    back = parse_touchstone(serialize_touchstone(net, fmt))
    assert np.max(np.abs(back.s - net.s)) < 1e-11


def test_serialize_empty_network():
    with pytest.raises(ValueError, match="nothing to write"):
        serialize_touchstone(Network(np.array([]), np.zeros((0, 1, 1)), 50.0))


def test_serialized_text_is_ascii_lf():
    text = serialize_touchstone(random_network(2, 5, seed=1))
    assert text.isascii() and "\r" not in text and text.endswith("\n")


# --- S <-> Y -----------------------------------------------------------------------------------

def test_matched_two_port():
    net = Network(np.array([1e9]), np.zeros((1, 2, 2)), 50.0)
    np.testing.assert_array_equal(s_to_y(net)[0], np.diag([0.02, 0.02]))


def test_one_port_formula():
    net = random_network(1, 64, seed=5)
    s = net.s[:, 0, 0]
    np.testing.assert_allclose(s_to_y(net)[:, 0, 0], (1 - s) / (50 * (1 + s)), rtol=1e-14)


def test_short_is_singular():
    net = Network(np.array([1e9, 2e9]), np.array([[[0.0]], [[-1.0]]]), 50.0)
    with pytest.raises(SingularConversionError, match="2.000000000e\\+09"):
        s_to_y(net)


def test_matches_matrix_definition():
    net = random_network(2, 64, seed=9)
    eye = np.eye(2)
    ref = np.array([(eye - s) @ np.linalg.inv(eye + s) / 50 for s in net.s])
    np.testing.assert_allclose(s_to_y(net), ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("n_ports", [1, 2])
def test_s_y_inverse_pair(n_ports):
    net = random_network(n_ports, 500, seed=11)
    back = y_to_s(s_to_y(net), net.z0)
    assert np.max(np.abs(back - net.s)) < 1e-12


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_reciprocity_preserved_exactly(seed):
    net = random_network(2, 16, seed)
    net.s[:, 0, 1] = net.s[:, 1, 0]
    y = s_to_y(net)
    assert np.array_equal(y[:, 0, 1], y[:, 1, 0])


# --- dut_admittance ---------------------------------------------------------------------------

def _y_network(y_matrix, z0=50.0):
    f = np.linspace(1e9, 2e9, y_matrix.shape[0])
    return Network(f, y_to_s(y_matrix, z0, f), z0)


def test_series_reduction_recovers_element():
    y = np.array([0.01 + 0.02j, 0.003 - 0.001j, 1e-4j])
    ym = np.stack([np.array([[v, -v], [-v, v]]) for v in y])
    tr = dut_admittance(_y_network(ym))
    np.testing.assert_allclose(tr.y, y, rtol=1e-12)
    assert tr.meta["topology"] == "series"


def test_shunt_reduction_recovers_element():
    y = np.array([0.01 + 0.02j, 0.003 - 0.001j, 1e-4j])
    # shunt element to ground at a through connection: Y11 + Y12 = y
    big = 1e3
    ym = np.stack([np.array([[v + big, -big], [-big, v + big]]) for v in y])
    tr = dut_admittance(_y_network(ym), "shunt")
    np.testing.assert_allclose(tr.y, y, rtol=1e-9)


def test_one_port_reduction():
    y = np.array([[[0.01 + 0.005j]], [[0.02 - 0.01j]]])
    tr = dut_admittance(_y_network(y))
    np.testing.assert_allclose(tr.y, y[:, 0, 0], rtol=1e-14)
    assert tr.meta["topology"] == "one_port"


def test_one_port_on_two_port_is_ambiguous():
    with pytest.raises(ValueError, match="ambiguous port"):
        dut_admittance(random_network(2, 4, seed=0), "one_port")


def test_series_pipeline_recovers_metrics(two_tone_params, tmp_path):
    trace = mbvd_admittance(two_tone_params, datasets.PAPER_GRID)
    path = tmp_path / "dut.s2p"
    path.write_text(serialize_touchstone(embed_admittance(trace, "series")))
    back = read_trace(path)
    assert back.meta["topology"] == "series"
    assert np.max(np.abs(back.y / trace.y - 1)) < 1e-9
    for a, b in zip(extract_report(back), extract_report(trace)):
        assert a.fs == pytest.approx(b.fs, rel=1e-9)
        assert a.q_3db == pytest.approx(b.q_3db, rel=1e-6)
        assert a.k2 == pytest.approx(b.k2, rel=1e-6)


def test_one_port_embedding_round_trip():
    tr = AdmittanceTrace(np.array([1e9, 2e9]), np.array([0.01 + 0.002j, 1e-4 - 3e-3j]))
    back = dut_admittance(embed_admittance(tr, "one_port"))
    np.testing.assert_allclose(back.y, tr.y, rtol=1e-13)


# --- trace CSV ----------------------------------------------------------------------------------

def test_csv_single_row():
    tr = read_trace_csv("freq_hz,re_y_s,im_y_s\n1e9,0.5,-0.25\n")
    assert len(tr) == 1 and tr.y[0] == 0.5 - 0.25j


def test_csv_round_trip_random():
    rng = np.random.default_rng(42)
    f = np.cumsum(rng.uniform(1e6, 1e8, 1001))
    y = rng.standard_normal(1001) * 1e-3 + 1j * rng.standard_normal(1001)
    tr = AdmittanceTrace(f, y)
    text = write_trace_csv(tr)
    back = read_trace_csv(text)
    assert write_trace_csv(back) == text
    assert np.max(np.abs(back.freqs / f - 1)) < 1e-12
    assert np.max(np.abs(back.y - y) / np.abs(y)) < 1e-11


@pytest.mark.parametrize("text, pattern", [
    ("freq,re,im\n1,2,3\n", "line 1"),
    ("freq_hz,re_y_s,im_y_s\n2e9,0,0\n1e9,0,0\n", "line 3: non-monotonic"),
    ("freq_hz,re_y_s,im_y_s\n1e9,0\n", "line 2: expected 3 fields"),
    ("freq_hz,re_y_s,im_y_s\n1e9,a,0\n", "line 2: non-numeric"),
    ("freq_hz,re_y_s,im_y_s\n", "no data"),
])
def test_csv_errors(text, pattern):
    with pytest.raises(TraceCsvError, match=pattern):
        read_trace_csv(text)


def test_json_number_format():
    text = dumps_json({"a": 1.5, "b": [2, None, True], "c": "x"})
    assert '"a": 1.500000000000e+00' in text
    assert json.loads(text) == {"a": 1.5, "b": [2, None, True], "c": "x"}
