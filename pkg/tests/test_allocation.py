import io
import math

import numpy as np
import pytest

from esfl import (
    InfeasibleUserError,
    LinkRates,
    OptimizerConfig,
    UserProfile,
    allocate_server_compute,
    alternate,
    best_cut,
    brute_force_joint,
    cut_workload,
    equalize_min_max,
    feasible_cuts,
    load_architecture,
    load_builtin,
    server_demand_terms,
    sfl_round_time,
)


def _doc(rows):
    return io.StringIO("layer,params,fwd_flops,activation\n" + "\n".join(rows) + "\n")


def _user(uid=0, n=500.0, tflops=1.3, kbps=10.0, epochs=5, **kw):
    return UserProfile(
        user_id=uid,
        n_samples=n,
        compute_flops=tflops * 1e12,
        rates=LinkRates(up=kbps * 1024.0, down=kbps * 1024.0),
        epochs=epochs,
        **kw,
    )


@pytest.fixture(scope="module")
def vgg19():
    return load_builtin("vgg19")


def _random_users(rng, count, comm=(5, 10, 20, 35), comp=(0.65, 1.3, 2.6, 4.55),
                  data=(200, 400, 600, 800)):
    return [
        _user(
            uid=i,
            n=float(rng.choice(data)),
            tflops=float(rng.choice(comp)),
            kbps=float(rng.choice(comm)),
        )
        for i in range(count)
    ]


class TestFeasibleCuts:
    def test_unconstrained_user_gets_all_layers(self, vgg19):
        u = _user()
        assert feasible_cuts(u, vgg19) == list(range(1, 21))

    def test_storage_below_first_layer_is_infeasible(self, vgg19):
        u = _user(storage_bytes=cut_workload(vgg19, 1).model_bytes / 2)
        with pytest.raises(InfeasibleUserError):
            feasible_cuts(u, vgg19)

    def test_boundary_storage_is_inclusive(self, vgg19):
        u = _user(storage_bytes=cut_workload(vgg19, 3).model_bytes)
        assert feasible_cuts(u, vgg19) == [1, 2, 3]


class TestBestCut:
    def test_huge_device_compute_prefers_local_when_no_comm_advantage(self):
        # constant activation at every cut: splitting saves no traffic, so
        # with a fast device and a slow server the full-local cut wins
        arch = load_architecture(_doc([
            "A,0.001,10,0.05", "B,0.001,10,0.05", "C,0.001,10,0.05",
        ]))
        u = _user(tflops=1e6, kbps=10.0)
        assert best_cut(u, arch, server_flops=1e9) == 3

    def test_rich_server_and_links_prefer_first_layer(self, vgg19):
        u = _user(tflops=1.3, kbps=1e12)
        assert best_cut(u, vgg19, server_flops=1e30) == 1

    def test_vgg19_scan_matches_direct_evaluation(self, vgg19):
        # independent oracle: evaluate the round time of all 20 cuts with a
        # hand-written formula and take the argmin
        u = _user(n=500, tflops=1.3, kbps=10.0, epochs=5)
        c_srv = 13e12
        d = vgg19.total_compute_per_sample
        best_val, best_l = math.inf, None
        for l in range(1, 21):
            cw = cut_workload(vgg19, l)
            epoch = (cw.user_compute * 500 / u.compute_flops
                     + cw.act_bytes * 500 / u.rates.up
                     + ((d - cw.user_compute) * 500 / c_srv if d > cw.user_compute else 0.0)
                     + cw.act_bytes * 500 / u.rates.down)
            total = cw.model_bytes / u.rates.up + cw.model_bytes / u.rates.down + 5 * epoch
            if total < best_val:
                best_val, best_l = total, l
        assert best_cut(u, vgg19, c_srv) == best_l

    def test_tie_breaks_to_smaller_index(self):
        # layer B adds nothing (no params, no compute, same activation), so
        # cuts 1 and 2 price identically; cut 3 loses on activation traffic
        arch = load_architecture(_doc(["A,0.1,10,0.05", "B,0,0,0.05", "C,0.1,0.1,0.2"]))
        u = _user()
        times = [None] * 3
        from esfl.allocation import _time_matrix

        times = _time_matrix([u], arch, np.array([1e12]), OptimizerConfig())[0]
        assert times[0] == times[1] < times[2]
        assert best_cut(u, arch, server_flops=1e12) == 1

    def test_zero_server_compute_forces_local(self, vgg19):
        u = _user()
        assert best_cut(u, vgg19, server_flops=0.0) == vgg19.num_layers


class TestEqualize:
    def test_symmetric_pair(self):
        c, k = equalize_min_max(np.array([10.0, 10.0]), np.zeros(2), 2.0)
        assert c == pytest.approx([1.0, 1.0], rel=1e-9)
        assert k == pytest.approx(10.0, rel=1e-9)

    def test_proportional_closed_form(self):
        # sum a_i / K = C_total with equal b -> K = 1, C = a
        c, k = equalize_min_max(np.array([1.0, 2.0, 3.0]), np.zeros(3), 6.0)
        assert c == pytest.approx([1.0, 2.0, 3.0], rel=1e-9)
        assert k == pytest.approx(1.0, rel=1e-9)

    def test_no_server_work(self):
        c, k = equalize_min_max(np.array([0.0]), np.array([7.0]), 5.0)
        assert c[0] == 0.0
        assert k == 7.0

    def test_mixed_idle_user_with_large_fixed_time(self):
        # the idle user's fixed time dominates; budget still fully spent
        a = np.array([4.0, 0.0])
        b = np.array([1.0, 50.0])
        c, k = equalize_min_max(a, b, 2.0)
        assert k == 50.0
        assert c[1] == 0.0
        assert c.sum() == pytest.approx(2.0, rel=1e-9)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            equalize_min_max(np.array([1.0]), np.array([0.0]), 0.0)
        with pytest.raises(ValueError):
            equalize_min_max(np.array([-1.0]), np.array([0.0]), 1.0)

    def test_saturation_and_equalization_random(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            m = int(rng.integers(2, 8))
            a = rng.uniform(0.5, 5.0, size=m)
            b = rng.uniform(0.0, 2.0, size=m)
            c_total = float(rng.uniform(1.0, 10.0))
            c, k = equalize_min_max(a, b, c_total)
            assert abs(c.sum() - c_total) <= 1e-6 * c_total
            times = b + a / c
            assert np.max(np.abs(times - k)) <= 1e-6 * k


class TestAllocateServerCompute:
    def test_users_cut_at_last_layer_get_nothing(self, vgg19):
        users = [_user(uid=0), _user(uid=1)]
        L = vgg19.num_layers
        c, k = allocate_server_compute(users, [L, 5], 130e12, vgg19)
        assert c[0] == 0.0
        assert c[1] == pytest.approx(130e12, rel=1e-6)

    def test_demand_terms_match_round_structure(self, vgg19):
        from esfl import round_time

        u = _user()
        cfg = OptimizerConfig(t_agg=0.5)
        a, b = server_demand_terms([u], [4], vgg19, cfg)
        srv = 2e12
        reconstructed = b[0] + a[0] / srv
        assert reconstructed == pytest.approx(
            round_time(u, vgg19, 4, srv, t_agg=0.5).total, rel=1e-12
        )

    def test_epoch_objective_drops_model_transfer(self, vgg19):
        from esfl import cut_workload as cwf

        u = _user()
        a_full, b_full = server_demand_terms([u], [4], vgg19, OptimizerConfig())
        a_ep, b_ep = server_demand_terms(
            [u], [4], vgg19, OptimizerConfig(epoch_objective=True)
        )
        assert a_full[0] == pytest.approx(u.epochs * a_ep[0], rel=1e-12)
        model_term = 2 * cwf(vgg19, 4).model_bytes / u.rates.up
        assert b_full[0] == pytest.approx(u.epochs * b_ep[0] + model_term, rel=1e-12)


class TestAlternate:
    def test_single_user_fixed_point(self, vgg19):
        res = alternate([_user()], vgg19, 130e12)
        assert res.converged
        assert res.iterations <= 2
        assert res.allocation.cuts[0] == best_cut(_user(), vgg19, 130e12)

    def test_identical_users_stay_symmetric(self, vgg19):
        users = [_user(uid=i) for i in range(4)]
        res = alternate(users, vgg19, 130e12)
        assert len(set(res.allocation.cuts)) == 1
        c = res.allocation.server_compute
        assert max(c) - min(c) <= 1e-9 * max(max(c), 1.0)

    def test_deterministic(self, vgg19):
        rng = np.random.default_rng(3)
        users = _random_users(rng, 10)
        r1 = alternate(users, vgg19, 130e12)
        r2 = alternate(users, vgg19, 130e12)
        assert r1 == r2

    def test_monotone_objective_trace(self, vgg19):
        rng = np.random.default_rng(23)
        for _ in range(10):
            users = _random_users(rng, 10)
            res = alternate(users, vgg19, 130e12)
            objs = [rec.objective for rec in res.trace]
            for earlier, later in zip(objs, objs[1:]):
                assert later <= earlier * (1 + 1e-12)

    def test_budget_saturation(self, vgg19):
        rng = np.random.default_rng(29)
        users = _random_users(rng, 10)
        res = alternate(users, vgg19, 130e12)
        total = sum(res.allocation.server_compute)
        if any(c > 0 for c in res.allocation.server_compute):
            assert abs(total - 130e12) <= 1e-6 * 130e12

    def test_iteration_cap_sets_warning_flag(self, vgg19):
        rng = np.random.default_rng(31)
        users = _random_users(rng, 10)
        res = alternate(users, vgg19, 130e12, OptimizerConfig(max_iters=1))
        assert res.iterations == 1
        assert not res.converged

    def test_infeasible_user_rejected(self, vgg19):
        bad = _user(storage_bytes=1.0)
        with pytest.raises(InfeasibleUserError):
            alternate([bad, _user(uid=1)], vgg19, 130e12)

    def test_binding_storage_limits_respected(self, vgg19):
        # one user can hold three layers, another eight; the optimum must
        # stay inside each feasible set and still beat any shared fixed cut
        # the constrained users could all take
        users = [
            _user(uid=0, storage_bytes=cut_workload(vgg19, 3).model_bytes),
            _user(uid=1, kbps=25, storage_bytes=cut_workload(vgg19, 8).model_bytes),
            _user(uid=2, tflops=3.25),
        ]
        res = alternate(users, vgg19, 130e12)
        assert res.allocation.cuts[0] <= 3
        assert res.allocation.cuts[1] <= 8
        for fixed_l in (1, 2, 3):
            assert res.allocation.objective <= sfl_round_time(
                users, vgg19, fixed_l, 130e12
            ) * (1 + 1e-12)

    def test_dead_link_user_fails_cleanly(self, vgg19):
        from esfl import AllocationError

        dead = UserProfile(user_id=0, n_samples=500.0, compute_flops=1e12,
                           rates=LinkRates(0.0, 0.0), epochs=5)
        with pytest.raises(AllocationError):
            alternate([dead, _user(uid=1)], vgg19, 130e12)

    def test_dominates_every_fixed_equal_split_policy(self, vgg19):
        # construction guarantee: the first cut pass already minimizes over
        # each user's whole feasible set at the equal split
        rng = np.random.default_rng(37)
        for _ in range(5):
            users = _random_users(rng, 8)
            res = alternate(users, vgg19, 130e12)
            for fixed_l in (1, 5, 12, 16, 20):
                assert res.allocation.objective <= sfl_round_time(
                    users, vgg19, fixed_l, 130e12
                ) * (1 + 1e-12)


class TestBruteForce:
    def _toy_arch(self):
        return load_architecture(_doc([
            "A,0.02,8,0.04", "B,0.03,12,0.02", "C,0.05,9,0.015", "D,0.3,4,0.001",
        ]))

    def test_refuses_large_instances(self, vgg19):
        with pytest.raises(ValueError):
            brute_force_joint([_user()], vgg19, 130e12)
        arch = self._toy_arch()
        users = [_user(uid=i) for i in range(4)]
        with pytest.raises(ValueError):
            brute_force_joint(users, arch, 1e12)

    def test_single_user_matches_alternate(self):
        arch = self._toy_arch()
        u = _user(n=100, tflops=0.002, kbps=200)
        bf = brute_force_joint([u], arch, 5e9)
        alt = alternate([u], arch, 5e9)
        assert bf.cuts == alt.allocation.cuts
        assert alt.allocation.objective == pytest.approx(bf.objective, rel=1e-9)

    def test_identical_pair_symmetric_optimum(self):
        arch = load_architecture(_doc(["A,0.02,8,0.04", "B,0.03,12,0.02", "C,0.05,9,0.0"]))
        users = [_user(uid=i, n=100, tflops=0.002, kbps=200) for i in range(2)]
        bf = brute_force_joint(users, arch, 5e9)
        assert bf.cuts[0] == bf.cuts[1]
        assert bf.server_compute[0] == pytest.approx(bf.server_compute[1], rel=1e-9)

    def test_oracle_dominates_heuristic(self):
        arch = self._toy_arch()
        rng = np.random.default_rng(41)
        for _ in range(10):
            users = [
                _user(uid=i, n=float(rng.integers(50, 300)),
                      tflops=float(rng.uniform(0.001, 0.01)),
                      kbps=float(rng.uniform(50, 500)))
                for i in range(2)
            ]
            bf = brute_force_joint(users, arch, 5e9)
            alt = alternate(users, arch, 5e9)
            assert alt.allocation.objective >= bf.objective * (1 - 1e-9)
