import io
import math

import numpy as np
import pytest

from esfl import (
    ProfileError,
    builtin_profiles,
    cut_workload,
    load_architecture,
    load_builtin,
    serialize_architecture,
    total_compute,
)

# Raw VGG19 table columns, used as an independent oracle for prefix sums.
VGG19_PARAMS = [0.0017, 0.0369, 0.0737, 0.147, 0.295, 0.590, 0.590, 0.590,
                1.180, 2.359, 2.359, 2.359, 2.359, 2.359, 2.359, 2.359,
                102.760, 16.777, 4.096, 0.0]
VGG19_FWD = [1.796, 37.749, 18.874, 37.749, 18.874, 37.749, 37.749, 37.749,
             18.874, 37.749, 37.749, 37.749, 9.437, 9.437, 9.437, 9.437,
             2.097, 0.524, 0.131, 0.0]


def _toy_doc(rows):
    text = "layer,params,fwd_flops,activation\n" + "\n".join(rows) + "\n"
    return io.StringIO(text)


class TestLoading:
    def test_vgg19_has_twenty_layers(self):
        arch = load_builtin("vgg19")
        assert arch.num_layers == 20

    def test_vgg19_first_row_values(self):
        arch = load_builtin("vgg19")
        first = arch.layers[0]
        assert first.name == "CONV1"
        assert first.param_count == 0.0017
        assert first.fwd_flops == 1.796
        assert first.activation_count == 0.0655

    def test_builtins_listed(self):
        assert builtin_profiles() == ("vgg13", "vgg16", "vgg19")

    def test_unknown_builtin(self):
        with pytest.raises(ProfileError):
            load_builtin("resnet50")

    def test_single_layer_rejected(self):
        with pytest.raises(ProfileError, match="single layer"):
            load_architecture(_toy_doc(["L1,1,1,1"]))

    def test_empty_document_rejected(self):
        with pytest.raises(ProfileError):
            load_architecture(io.StringIO("layer,params,fwd_flops,activation\n"))

    def test_missing_header_rejected(self):
        with pytest.raises(ProfileError, match="header"):
            load_architecture(io.StringIO("L1,1,1,1\nL2,1,1,1\n"))

    def test_malformed_value_names_line(self):
        doc = _toy_doc(["L1,1,1,1", "L2,abc,1,1"])
        with pytest.raises(ProfileError, match="line 3"):
            load_architecture(doc)

    def test_negative_value_rejected(self):
        with pytest.raises(ProfileError):
            load_architecture(_toy_doc(["L1,1,1,1", "L2,-1,1,1"]))

    def test_blank_fields_only_on_final_layer(self):
        with pytest.raises(ProfileError, match="final layer"):
            load_architecture(_toy_doc(["L1,,1,1", "L2,1,1,1"]))
        arch = load_architecture(_toy_doc(["L1,1,1,1", "Head,,,"]))
        assert arch.layers[-1].activation_count == 0.0

    def test_round_trip_is_value_exact(self):
        for name in builtin_profiles():
            arch = load_builtin(name)
            again = load_architecture(io.StringIO(serialize_architecture(arch)),
                                      name=name)
            for a, b in zip(arch.layers, again.layers):
                assert a == b


class TestCutWorkload:
    def test_prefix_sum_at_cut_two_without_backward(self):
        arch = load_builtin("vgg19", bwd_multiplier=0.0)
        cw = cut_workload(arch, 2)
        assert cw.user_compute == pytest.approx((1.796 + 37.749) * 1e6, rel=1e-12)

    def test_single_layer_cut_without_backward(self):
        arch = load_builtin("vgg19", bwd_multiplier=0.0)
        assert cut_workload(arch, 1).user_compute == pytest.approx(1.796e6, rel=1e-12)

    def test_backward_multiplier_scales_compute(self):
        arch = load_builtin("vgg19")  # default kappa = 2
        cw = cut_workload(arch, 2)
        assert cw.user_compute == pytest.approx(3 * (1.796 + 37.749) * 1e6, rel=1e-12)

    def test_cut_at_last_layer_leaves_no_server_share(self):
        arch = load_builtin("vgg19")
        cw = cut_workload(arch, arch.num_layers)
        assert total_compute(arch) - cw.user_compute == 0.0

    def test_cut_out_of_range(self):
        arch = load_builtin("vgg19")
        with pytest.raises(ValueError):
            cut_workload(arch, 0)
        with pytest.raises(ValueError):
            cut_workload(arch, arch.num_layers + 1)

    def test_activation_and_model_bytes(self):
        arch = load_builtin("vgg19")
        cw = cut_workload(arch, 1)
        assert cw.act_bytes == pytest.approx(0.0655 * 4e6, rel=1e-12)
        assert cw.model_bytes == pytest.approx(0.0017 * 4e6, rel=1e-12)

    def test_memory_is_model_plus_batched_activations(self):
        arch = load_builtin("vgg19")
        cw = cut_workload(arch, 2, batch=32)
        expected = (0.0017 + 0.0369) * 4e6 + 32 * (0.0655 + 0.0328) * 4e6
        assert cw.mem_bytes == pytest.approx(expected, rel=1e-12)


class TestTotalCompute:
    def test_definition_matches_full_cut(self):
        for name in builtin_profiles():
            arch = load_builtin(name)
            assert total_compute(arch) == cut_workload(arch, arch.num_layers).user_compute

    def test_vgg19_is_three_times_forward_sum(self):
        arch = load_builtin("vgg19")
        assert total_compute(arch) == pytest.approx(3 * sum(VGG19_FWD) * 1e6, rel=1e-12)

    def test_two_layer_toy(self):
        arch = load_architecture(_toy_doc(["A,0,10,0", "B,0,20,0"]),
                                 bwd_multiplier=1.0)
        assert total_compute(arch) == pytest.approx(60e6, rel=1e-12)


class TestInvariants:
    def test_monotone_prefix_quantities(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(2, 12))
            rows = [
                f"L{j},{rng.uniform(0, 5)},{rng.uniform(0, 50)},{rng.uniform(0, 1)}"
                for j in range(n)
            ]
            arch = load_architecture(_toy_doc(rows))
            uc = arch.user_flops_by_cut
            mb = arch.model_bytes_by_cut
            assert np.all(np.diff(uc) >= 0)
            assert np.all(np.diff(mb) >= 0)

    def test_conservation_within_one_ulp(self):
        # user + (total - user) reconstructs the total exactly up to the
        # final rounding of the subtraction, i.e. one ulp of the total
        for name in builtin_profiles():
            arch = load_builtin(name)
            D = total_compute(arch)
            for u in arch.user_flops_by_cut:
                assert abs(u + (D - u) - D) <= math.ulp(D)

    def test_vgg19_model_bytes_total(self):
        arch = load_builtin("vgg19")
        assert arch.model_bytes_by_cut[-1] == pytest.approx(
            sum(VGG19_PARAMS) * 4e6, rel=1e-12
        )
