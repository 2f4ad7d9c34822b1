import math
import threading
import time

import numpy as np
import pytest

from grcattn import attention as att
from grcattn import model as m
from grcattn import streaming as st
from grcattn.numerics import ContractError

DIMS = m.ModelDims(vocab=6, feat=4, enc=5, dec=5, att=5, emb=3, lookahead=1, stride=2)


@pytest.fixture(scope="module")
def params():
    p = m.init_params(DIMS, m.DECGRC, 7)
    rng = np.random.default_rng(8)
    for k, v in p.arrays.items():
        p.arrays[k] = v + rng.normal(scale=0.8, size=v.shape)
    p.arrays["att_b"] = np.array(-1.0)
    return p


def encoded(params, seed, n=24):
    x = np.random.default_rng(seed).normal(size=(n, DIMS.feat))
    return m.encode(x, params.arrays, DIMS)


def run(params, h, nu, **kw):
    session = st.StreamSession(params, nu, max_len=kw.pop("max_len", 12), **kw)
    hyp, log = st.stream_decode(st.FrameSupplier.from_array(h), session)
    return hyp, log, session


def scores_for_gates(z):
    # invert z_t = 1 / (1 + sum_{j<=t} exp(e_j)) with e_1 = 0
    totals = np.r_[1.0, 1.0 / np.asarray(z[1:]) - 1.0]
    return np.log(np.r_[totals[0], np.diff(totals)])


def test_threshold_scan_hand_trace(rng):
    z = np.array([1.0, 0.4, 0.009, 0.005, 0.001])
    e = scores_for_gates(z)
    h = rng.normal(size=(5, 3))
    res = st.threshold_scan(zip(h, e), 0.01)
    assert res.t_end == 3
    np.testing.assert_allclose(res.gates, z[:3], rtol=1e-12)
    np.testing.assert_allclose(res.context, att.intermediate_context(h, z, 3), rtol=1e-12)
    assert res.gate < 0.01


def test_threshold_scan_reads_lazily(rng):
    z = np.array([1.0, 0.4, 0.009, 0.005])
    pulled = []

    def frames():
        for t, pair in enumerate(zip(rng.normal(size=(4, 2)), scores_for_gates(z)), start=1):
            pulled.append(t)
            yield pair

    assert st.threshold_scan(frames(), 0.01).t_end == 3
    assert pulled == [1, 2, 3]


def test_threshold_scan_single_frame_and_empty():
    res = st.threshold_scan([(np.array([2.0]), 5.0)], 0.5)
    assert res.t_end == 1 and res.gates == [1.0] and res.context[0] == 2.0
    with pytest.raises(ContractError):
        st.threshold_scan([], 0.5)


def test_nu_zero_matches_offline(params):
    for seed in range(20):
        h = encoded(params, seed, n=10 + seed)
        hyp, log, _ = run(params, h, 0.0)
        off = m.greedy_decode(params, h, 12)
        assert hyp.tokens == off.tokens
        assert hyp.score == pytest.approx(off.score, rel=1e-9, abs=1e-9)
        assert all(r.t_end == h.shape[0] for r in log.records)


def test_nu_one_stops_at_second_frame(params):
    h = encoded(params, 3)
    _, log, _ = run(params, h, 1.0)
    assert [r.t_end for r in log.records] == [2] * len(log.records)


def test_break_soundness(params):
    for seed in range(10):
        h = encoded(params, seed, n=30)
        T = h.shape[0]
        nu = 0.05
        _, log, session = run(params, h, nu, record=True)
        P = params.arrays
        for rec, tr in zip(log.records, session.trace):
            cum = np.zeros(T)
            cum[: tr.cum_alpha.shape[0]] = tr.cum_alpha
            e = att.additive_scores(P["att_v"], P["att_W"], P["att_eta"], P["att_vb"], tr.s, h, cum)
            z = att.decgrc_gates(e + P["att_b"])
            assert 1 <= rec.t_end <= T
            if rec.t_end < T:
                assert rec.gate < nu
                assert rec.gate == pytest.approx(z[rec.t_end - 1], rel=1e-9)
                assert np.all(z[rec.t_end:] < nu)
            np.testing.assert_allclose(tr.context, att.intermediate_context(h, z, rec.t_end), rtol=1e-9, atol=1e-12)


def test_context_only_uses_frames_up_to_endpoint(params):
    for seed in range(8):
        h = encoded(params, seed, n=40)
        _, log, session = run(params, h, 0.1, record=True)
        high = 0
        for u, rec in enumerate(log.records):
            high = max(high, rec.t_end)
            g = h.copy()
            g[high:] += 100.0
            _, _, other = run(params, g, 0.1, record=True)
            for k in range(u + 1):
                np.testing.assert_array_equal(other.trace[k].context, session.trace[k].context)


def test_frames_consumed_bounded(params):
    h = encoded(params, 1)
    _, log, session = run(params, h, 0.2)
    assert session.frames_consumed == max(r.t_end for r in log.records)
    assert session.frames_consumed <= len(session.frames) <= h.shape[0]


def test_threaded_producer(params):
    h = encoded(params, 2)
    sup = st.FrameSupplier()

    def produce():
        for t, row in enumerate(h, start=1):
            time.sleep(0.001)
            sup.put(t, row)
        sup.close()

    th = threading.Thread(target=produce)
    th.start()
    hyp, log = st.stream_decode(sup, st.StreamSession(params, 0.05, max_len=12))
    th.join()
    ref, ref_log, _ = run(params, h, 0.05)
    assert hyp.tokens == ref.tokens
    assert log.endpoints() == ref_log.endpoints()


def test_stall_times_out(params):
    sup = st.FrameSupplier()
    sup.put(1, np.zeros(DIMS.enc))
    with pytest.raises(st.StreamTimeout):
        st.stream_decode(sup, st.StreamSession(params, 0.0, patience=0.05))


def test_empty_utterance_is_contract_violation(params):
    sup = st.FrameSupplier()
    sup.close()
    with pytest.raises(ContractError):
        st.stream_decode(sup, st.StreamSession(params, 0.1))


def test_out_of_order_frames(params):
    sup = st.FrameSupplier()
    sup.put(2, np.zeros(DIMS.enc))
    sup.close()
    with pytest.raises(ContractError):
        st.stream_decode(sup, st.StreamSession(params, 0.1))


def test_session_validation(params):
    with pytest.raises(ContractError):
        st.StreamSession(params, 1.5)
    with pytest.raises(ContractError):
        st.StreamSession(m.init_params(DIMS, m.GRC, 0), 0.1)


def test_endpoint_log_jsonl_roundtrip():
    log = st.EndpointLog([st.EndpointRecord(1, 3, 0.004), st.EndpointRecord(2, 5, 0.25)], 9)
    text = log.to_jsonl()
    assert text.splitlines()[0] == '{"u": 1, "t_end": 3, "gate": 0.004}'
    assert st.EndpointLog.from_jsonl(text, 9) == log


def _log(ends):
    return st.EndpointLog([st.EndpointRecord(u, t, 0.0) for u, t in enumerate(ends, start=1)])


def test_endpoint_fraction_examples():
    assert st.endpoint_fraction(_log([7] * 5), 7, 5) == 1.0
    U, T = 10, 30
    assert st.endpoint_fraction(_log([u * T // U for u in range(1, U + 1)]), T, U) == pytest.approx((U + 1) / (2 * U))
    # T=13, U=65, endpoints summing to 459
    log = _log([7] * 61 + [8] * 4)
    assert log.total_steps() == 459
    assert st.endpoint_fraction(log, 13, 65) == pytest.approx(459 / 845)
    assert round(459 / 845, 3) == 0.543
    with pytest.raises(ContractError):
        st.endpoint_fraction(log, 0, 65)
