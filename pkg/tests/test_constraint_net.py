import numpy as np
import pytest

from ceres_rl import constraint_net as cn
from ceres_rl import mlp
from ceres_rl.geometry import ActionBox, LinearConstraintSet

BOX = ActionBox.symmetric(0.1, 2)


def make_net(rng, n_obs=3, n_in=2, n_act=2, hidden=(8, 8)):
    return cn.init_constraint_net(rng, n_obs, n_in, n_act, hidden=hidden)


class TestLossExamples:
    CS = LinearConstraintSet(
        np.array([[1.0, 0.0], [0.0, 1.0]]),
        np.array([0.02, 0.05]),
        np.zeros(2),
        np.array([0.02, 0.05]),
    )

    def test_positive_inside_zero_loss(self):
        d = cn.LabeledDemo(np.zeros(3), [0.0, 0.0], 1)
        assert cn.constraint_loss(self.CS, d) == pytest.approx(0.0)

    def test_positive_outside_max_violation(self):
        # g = (0.06, 0.01) -> max violation 0.06
        d = cn.LabeledDemo(np.zeros(3), [0.08, 0.06], 1)
        assert cn.constraint_loss(self.CS, d) == pytest.approx(0.06)

    def test_negative_inside_min_satisfaction(self):
        # g = (-0.01, -0.04) -> min satisfaction 0.01
        d = cn.LabeledDemo(np.zeros(3), [0.01, 0.01], 0)
        assert cn.constraint_loss(self.CS, d) == pytest.approx(0.01)

    def test_negative_outside_zero_loss(self):
        d = cn.LabeledDemo(np.zeros(3), [0.09, 0.0], 0)
        assert cn.constraint_loss(self.CS, d) == pytest.approx(0.0)

    def test_indicator_validated(self):
        with pytest.raises(ValueError):
            cn.LabeledDemo(np.zeros(3), np.zeros(2), 2)


class TestBatchLoss:
    def test_matches_per_demo_loss(self):
        rng = np.random.default_rng(0)
        net = make_net(rng)
        states = rng.normal(size=(16, 3))
        actions = rng.uniform(-0.1, 0.1, size=(16, 2))
        indicators = rng.integers(0, 2, size=16)
        loss, _, _, _ = cn.batch_loss_and_grad(net, states, actions, indicators, BOX, 2)
        per_demo = []
        for s, a, ind in zip(states, actions, indicators):
            cset = cn.predict_constraints(net, s, BOX, 2)
            per_demo.append(cn.constraint_loss(cset, cn.LabeledDemo(s, a, int(ind))))
        assert loss == pytest.approx(np.mean(per_demo), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        checked = 0
        trials = 0
        while checked < 20 and trials < 200:
            trials += 1
            net = make_net(rng, hidden=(6,))
            states = rng.normal(size=(4, 3))
            actions = rng.uniform(-0.1, 0.1, size=(4, 2))
            indicators = rng.integers(0, 2, size=4)
            _, w_grads, b_grads, g = cn.batch_loss_and_grad(
                net, states, actions, indicators, BOX, 2
            )
            # skip configurations near a relu kink or a max/min tie
            margins = np.sort(np.abs(g), axis=1)
            gaps = np.abs(np.abs(g)[:, 0] - np.abs(g)[:, 1])
            if np.min(margins) < 1e-3 or np.min(gaps) < 1e-3:
                continue
            checked += 1

            def loss_of(n):
                l, _, _, _ = cn.batch_loss_and_grad(n, states, actions, indicators, BOX, 2)
                return l

            h = 1e-6
            for li, W in enumerate(net.weights):
                for k in range(0, W.size, max(1, W.size // 6)):
                    ij = np.unravel_index(k, W.shape)
                    W[ij] += h
                    lp = loss_of(net)
                    W[ij] -= 2 * h
                    lm = loss_of(net)
                    W[ij] += h
                    fd = (lp - lm) / (2 * h)
                    an = w_grads[li][ij]
                    denom = max(1e-6, abs(fd), abs(an))
                    assert abs(fd - an) / denom < 1e-4
        assert checked == 20

    def test_zero_loss_iff_perfect_accuracy(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            net = make_net(rng, hidden=(6,))
            states = rng.normal(size=(8, 3))
            actions = rng.uniform(-0.1, 0.1, size=(8, 2))
            indicators = rng.integers(0, 2, size=8)
            loss, _, _, _ = cn.batch_loss_and_grad(net, states, actions, indicators, BOX, 2)
            demos = [
                cn.LabeledDemo(s, a, int(i))
                for s, a, i in zip(states, actions, indicators)
            ]
            acc = cn.separation_accuracy(net, demos, BOX, 2)
            if loss == 0.0:
                assert acc == 1.0
            if acc < 1.0:
                assert loss > 0.0


class TestSeparationAccuracy:
    def test_empty_set_rejected(self):
        rng = np.random.default_rng(3)
        net = make_net(rng)
        with pytest.raises(ValueError):
            cn.separation_accuracy(net, [], BOX, 2)

    def test_boundary_counts_for_both_classes(self):
        # a set whose first constraint passes exactly through the action
        cs = LinearConstraintSet(
            np.array([[1.0, 0.0]]), np.array([0.05]), np.zeros(2), np.array([0.05])
        )
        a = np.array([0.05, 0.0])
        g = cs.values(a)
        assert np.all(g <= 0.0) and np.any(g >= 0.0)  # satisfied AND separated


class TestTraining:
    def _separable_demos(self, rng, n_pos=120, n_neg=120):
        # feasible iff first action component <= 0.02, independent of state
        demos = []
        for _ in range(n_pos):
            a = np.array([rng.uniform(-0.1, 0.015), rng.uniform(-0.1, 0.1)])
            demos.append(cn.LabeledDemo(rng.normal(size=3), a, 1))
        for _ in range(n_neg):
            a = np.array([rng.uniform(0.05, 0.1), rng.uniform(-0.1, 0.1)])
            demos.append(cn.LabeledDemo(rng.normal(size=3), a, 0))
        return demos

    def test_recovers_separable_rule(self):
        rng = np.random.default_rng(4)
        demos = self._separable_demos(rng)
        net = make_net(rng, hidden=(32, 32))
        cfg = cn.ConstraintTrainConfig(epochs=15, n_in=2)
        net, history = cn.train_constraints(net, demos, cfg, BOX, rng, lr=1e-3)
        assert history["accuracy"][-1] >= 0.95
        assert history["loss"][-1] < history["loss"][0]

    def test_single_class_refused(self):
        rng = np.random.default_rng(5)
        net = make_net(rng)
        demos = [cn.LabeledDemo(np.zeros(3), np.zeros(2), 1)] * 5
        with pytest.raises(cn.SingleClassBufferError):
            cn.train_constraints(net, demos, cn.ConstraintTrainConfig(), BOX, rng)

    def test_epoch_covers_negatives_once(self, monkeypatch):
        # tag each demo with a unique id in state[0] and record every batch
        rng = np.random.default_rng(6)
        n_pos, n_neg = 40, 100
        demos = []
        for i in range(n_pos):
            demos.append(cn.LabeledDemo([float(i), 0.0, 0.0], [0.01, 0.0], 1))
        for i in range(n_neg):
            demos.append(cn.LabeledDemo([float(n_pos + i), 0.0, 0.0], [0.09, 0.0], 0))
        seen = []
        real = cn.batch_loss_and_grad

        def spy(net, states, actions, indicators, box, n_in):
            seen.append((np.array(states), np.array(indicators)))
            return real(net, states, actions, indicators, box, n_in)

        monkeypatch.setattr(cn, "batch_loss_and_grad", spy)
        net = make_net(rng, hidden=(4,))
        cfg = cn.ConstraintTrainConfig(epochs=1, n_in=2)
        cn.train_constraints(net, demos, cfg, BOX, rng)

        neg_ids = []
        pos_count = 0
        for states, indicators in seen:
            ids = states[:, 0].astype(int)
            neg_ids.extend(ids[indicators == 0])
            pos_count += int(np.sum(indicators == 1))
        # every negative appears exactly once per epoch
        assert sorted(neg_ids) == list(range(n_pos, n_pos + n_neg))
        # positives are resampled: 32 per batch, ceil(100/32) = 4 batches
        assert pos_count == 32 * 4

    def test_positive_resampling_rate_matches_class_ratio(self, monkeypatch):
        # with the reference buffer shape (ratio ~2.21, equal batch halves)
        # each positive is drawn ~2.2 times per epoch in expectation
        rng = np.random.default_rng(7)
        n_pos, n_neg = 723, 1600  # ~ratio 2.213 scaled down
        demos = []
        for i in range(n_pos):
            demos.append(cn.LabeledDemo([float(i), 0.0, 0.0], [0.01, 0.0], 1))
        for i in range(n_neg):
            demos.append(cn.LabeledDemo([float(n_pos + i), 0.0, 0.0], [0.09, 0.0], 0))
        counts = {"pos": 0}
        real = cn.batch_loss_and_grad

        def spy(net, states, actions, indicators, box, n_in):
            counts["pos"] += int(np.sum(np.asarray(indicators) == 1))
            return real(net, states, actions, indicators, box, n_in)

        monkeypatch.setattr(cn, "batch_loss_and_grad", spy)
        net = make_net(rng, hidden=(4,))
        cfg = cn.ConstraintTrainConfig(epochs=1, n_in=2)
        cn.train_constraints(net, demos, cfg, BOX, rng)
        appearances = counts["pos"] / n_pos
        assert appearances == pytest.approx(n_neg / n_pos, rel=0.02)

    def test_update_constraints_nan_on_single_class(self):
        rng = np.random.default_rng(8)
        net = make_net(rng)
        adam = mlp.AdamState.for_params(net)
        demos = [cn.LabeledDemo(np.zeros(3), np.zeros(2), 1)] * 3
        out = cn.update_constraints(net, demos, adam, BOX, 2, rng, n_batches=5)
        assert np.isnan(out)

    def test_predicted_sets_always_valid(self):
        from ceres_rl.geometry import offset_bounds

        rng = np.random.default_rng(9)
        net = make_net(rng)
        lo, hi = offset_bounds(BOX)
        for _ in range(50):
            s = rng.normal(size=3) * 5
            cn.predict_constraints(net, s, BOX, 2).validate(lo, hi)
