import numpy as np
import pytest

from censurv.errors import ShapeMismatch, StaleGradients, SurvivalError
from censurv.kernel import (ParamStore, attention_combine, dense, grad_check, lstm_step,
                            params_from_bytes, params_to_bytes, sgd_step, softmax)


def check_op(op, inputs, seed=0, tol=1e-5):
    """Grad-check an op by projecting its (first) output onto a fixed random tensor."""
    store = ParamStore()
    for name, value in inputs.items():
        store.add(name, value)
    rng = np.random.default_rng(seed)
    proj = {}

    def f(s):
        out, pb = op(s)
        first = out[0] if isinstance(out, tuple) else out
        if "R" not in proj:
            proj["R"] = rng.normal(size=first.shape)
        for name, g in pb(proj["R"]).items():
            s.accumulate(name, g)
        return float(np.sum(first * proj["R"]))

    report = grad_check(f, store, tolerance=tol, max_per_tensor=None)
    assert report.passed, report.per_param
    return report


class TestDense:
    def test_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, _ = dense(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_zero_input(self):
        rng = np.random.default_rng(0)
        out, _ = dense(np.zeros((4, 3)), rng.normal(size=(3, 2)), np.array([0.5, -2.0]))
        np.testing.assert_array_equal(out, np.tile([0.5, -2.0], (4, 1)))

    @pytest.mark.parametrize("act", ["identity", "tanh", "relu"])
    def test_pullback(self, act):
        rng = np.random.default_rng(1)

        def op(s):
            out, pb = dense(s["x"], s["W"], s["b"], act)
            return out, lambda d: dict(zip(("x", "W", "b"), pb(d)))

        check_op(op, {"x": rng.normal(size=(5, 4)), "W": rng.normal(size=(4, 3)),
                      "b": rng.normal(size=3)})

    def test_shape_error(self):
        with pytest.raises(ShapeMismatch):
            dense(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))


class TestLSTM:
    def test_zero_weights(self):
        H = 3
        p = {"Wx": np.zeros((2, 4 * H)), "Wh": np.zeros((H, 4 * H)), "b": np.zeros(4 * H)}
        (h, c), _ = lstm_step(np.ones((1, 2)), (np.zeros((1, H)), np.zeros((1, H))), p)
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_saturated_forget_gate_keeps_cell(self):
        H = 2
        b = np.zeros(4 * H)
        b[H:2 * H] = 100.0
        p = {"Wx": np.zeros((3, 4 * H)), "Wh": np.zeros((H, 4 * H)), "b": b}
        c0 = np.array([[0.7, -1.3]])
        (_, c), _ = lstm_step(np.ones((1, 3)), (np.zeros((1, H)), c0), p)
        np.testing.assert_allclose(c, c0, atol=1e-6)

    def test_pullback(self):
        rng = np.random.default_rng(2)
        H, d_in = 3, 4

        def op(s):
            (h, c), pb = lstm_step(s["x"], (s["h"], s["c"]), {k: s[k] for k in ("Wx", "Wh", "b")})

            def back(d):
                dx, dh, dc, g = pb(d, 0.5 * d)
                return {"x": dx, "h": dh, "c": dc, **g}
            # project h + 0.5 c so both output paths are exercised
            return h + 0.5 * c, back

        check_op(op, {"x": rng.normal(size=(2, d_in)), "h": rng.normal(size=(2, H)),
                      "c": rng.normal(size=(2, H)), "Wx": rng.normal(size=(d_in, 4 * H)) * 0.5,
                      "Wh": rng.normal(size=(H, 4 * H)) * 0.5, "b": rng.normal(size=4 * H)})


class TestAttention:
    def test_equal_logits(self):
        D = np.array([[1.0, 2.0], [3.0, 0.0], [-1.0, 1.0]])
        (theta, alpha), _ = attention_combine(np.ones((2, 4)), np.zeros((4, 3)), D)
        np.testing.assert_allclose(alpha, 1 / 3)
        np.testing.assert_allclose(theta, np.tile(D.mean(axis=0), (2, 1)))

    def test_identical_atoms(self):
        rng = np.random.default_rng(3)
        D = np.tile([0.3, -0.7], (4, 1))
        (theta, _), _ = attention_combine(rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), D)
        np.testing.assert_allclose(theta, np.tile([0.3, -0.7], (5, 1)), atol=1e-15)

    def test_pullback(self):
        rng = np.random.default_rng(4)

        def op(s):
            (theta, alpha), pb = attention_combine(s["h"], s["W"], s["D"])
            return theta, lambda d: dict(zip(("h", "W", "D"), pb(d)))

        check_op(op, {"h": rng.normal(size=(3, 5)), "W": rng.normal(size=(5, 4)),
                      "D": rng.normal(size=(4, 6))})

    def test_alpha_pullback(self):
        rng = np.random.default_rng(5)

        def op(s):
            (theta, alpha), pb = attention_combine(s["h"], s["W"], s["D"])
            return alpha, lambda d: dict(zip(("h", "W", "D"), pb(np.zeros_like(theta), d)))

        check_op(op, {"h": rng.normal(size=(3, 5)), "W": rng.normal(size=(5, 4)),
                      "D": rng.normal(size=(4, 6))})


def test_softmax_is_stable():
    a = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(a, [[0.5, 0.5, 0.0]])


class TestSGD:
    def test_zero_gradient_no_decay(self):
        s = ParamStore()
        s.add("p", [1.0, -2.0])
        s.zero_grad()
        sgd_step(s, lr=0.1, momentum=0.9)
        np.testing.assert_array_equal(s["p"], [1.0, -2.0])

    def test_plain_step(self):
        s = ParamStore()
        s.add("p", [1.0, -2.0])
        s.accumulate("p", [0.5, 0.25])
        sgd_step(s, lr=0.1, momentum=0.0)
        np.testing.assert_allclose(s["p"], [0.95, -2.025], atol=1e-15)

    def test_quadratic_bowl(self):
        s = ParamStore()
        s.add("p", [1.0, 1.0])
        for step in range(200):
            s.accumulate("p", s["p"])
            sgd_step(s, lr=0.1, momentum=0.9)
        assert 0.5 * float(s["p"] @ s["p"]) < 1e-6
        # scalar recurrence v <- 0.9 v + p, p <- p - 0.1 v simulated directly
        p, v = 1.0, 0.0
        for step in range(200):
            v = 0.9 * v + p
            p = p - 0.1 * v
        np.testing.assert_allclose(s["p"], [p, p], rtol=1e-12)

    def test_stale_gradients(self):
        s = ParamStore()
        s.add("p", [1.0])
        s.accumulate("p", [1.0])
        sgd_step(s, lr=0.1)
        with pytest.raises(StaleGradients):
            sgd_step(s, lr=0.1)

    def test_clipping(self):
        s = ParamStore()
        s.add("p", [0.0, 0.0])
        s.accumulate("p", [30.0, 40.0])
        sgd_step(s, lr=1.0, momentum=0.0, clip_norm=5.0)
        np.testing.assert_allclose(s["p"], [-3.0, -4.0])

    def test_non_finite_is_an_error(self):
        s = ParamStore()
        s.add("p", [1.0])
        s.accumulate("p", [np.inf])
        with pytest.raises(SurvivalError) as exc:
            sgd_step(s, lr=0.1)
        assert exc.value.code == "NON_FINITE"


class TestGradCheck:
    def test_sum(self):
        s = ParamStore()
        s.add("a", np.arange(4.0))
        s.add("b", np.ones((2, 2)))

        def f(st):
            for name in st.names():
                st.accumulate(name, np.ones_like(st[name]))
            return float(sum(np.sum(st[n]) for n in st.names()))

        report = grad_check(f, s)
        assert report.max_rel_error <= 1e-10 or report.passed

    def test_half_square(self):
        s = ParamStore()
        s.add("p", [0.3, -1.2, 2.0])

        def f(st):
            st.accumulate("p", st["p"])
            return 0.5 * float(st["p"] @ st["p"])

        assert grad_check(f, s).passed

    def test_detects_wrong_gradient(self):
        s = ParamStore()
        s.add("p", [0.3, -1.2])

        def f(st):
            st.accumulate("p", 2 * st["p"])
            return 0.5 * float(st["p"] @ st["p"])

        assert not grad_check(f, s).passed


def test_param_store_round_trip():
    rng = np.random.default_rng(0)
    s = ParamStore()
    s.add("enc/W", rng.normal(size=(3, 4)))
    s.add("scalar", [1.5])
    raw = params_to_bytes(s, {"artifact": {"family": "x"}})
    back, header = params_from_bytes(raw)
    assert back.names() == s.names()
    for n in s.names():
        np.testing.assert_array_equal(back[n], s[n])
    assert header["artifact"] == {"family": "x"}
    assert params_to_bytes(back, {"artifact": {"family": "x"}}) == raw


def test_param_store_rejects_duplicates_and_bad_shapes():
    s = ParamStore()
    s.add("p", [1.0, 2.0])
    with pytest.raises(KeyError):
        s.add("p", [0.0])
    with pytest.raises(ShapeMismatch):
        s.accumulate("p", [1.0])
