import math

import numpy as np
import pytest

from cotforge.distill.losses import (
    LogitTensor,
    LossWeights,
    TokenizedExample,
    kl_divergence,
    masked_token_nll,
    multitask_loss,
    objective,
    soft_losses,
    temp_softmax,
    total_student_loss,
)
from cotforge.kernels import IGNORE_INDEX


def ex(targets, cls=0, prompt_len=1):
    t = np.array(targets)
    return TokenizedExample(np.zeros_like(t), t, cls, prompt_len)


def lt(tok, cls=(0.0, 0.0, 0.0)):
    return LogitTensor(np.array(tok, dtype=float), np.array(cls, dtype=float))


def test_uniform_two_way_nll_is_ln2():
    assert masked_token_nll([lt([[0.0, 0.0]])], [ex([0])]) == pytest.approx(math.log(2), abs=1e-6)
    assert masked_token_nll([lt([[0.0, 0.0]])], [ex([0])]) == pytest.approx(0.693147, abs=1e-6)


def test_masked_positions_do_not_contribute():
    base = masked_token_nll([lt([[0.0, 0.0], [1.0, -1.0]])], [ex([IGNORE_INDEX, 0])])
    changed = masked_token_nll([lt([[50.0, -50.0], [1.0, -1.0]])], [ex([IGNORE_INDEX, 0])])
    assert base == changed


def test_token_nll_sums_over_tokens_and_averages_over_batch():
    a = masked_token_nll([lt([[0.0, 0.0], [0.0, 0.0]])], [ex([0, 1])])
    assert a == pytest.approx(2 * math.log(2))
    b = masked_token_nll([lt([[0.0, 0.0], [0.0, 0.0]]), lt([[0.0, 0.0], [0.0, 0.0]])],
                         [ex([0, 1]), ex([IGNORE_INDEX, 1])])
    assert b == pytest.approx(1.5 * math.log(2))


def test_all_masked_warns_and_is_zero():
    with pytest.warns(RuntimeWarning):
        assert masked_token_nll([lt([[0.0, 0.0]])], [ex([IGNORE_INDEX])]) == 0.0


def test_temperature_softmax_values():
    np.testing.assert_allclose(temp_softmax([0.0, 1.0], 1.0), [0.268941, 0.731059], atol=1e-6)
    np.testing.assert_allclose(temp_softmax([0.0, 1.0], 2.0), [0.377541, 0.622459], atol=1e-6)
    np.testing.assert_allclose(temp_softmax([1000.0, 1001.0], 1.0), [0.268941, 0.731059], atol=1e-6)
    with pytest.raises(ValueError):
        temp_softmax([0.0], 0.0)


def test_high_temperature_flattens_and_kills_kl():
    z = np.array([5.0, -3.0, 0.5])
    p = temp_softmax(z, 1e6)
    # first-order deviation from uniform is (z_i - mean z) / (3 tau)
    np.testing.assert_allclose(p, 1 / 3 + (z - z.mean()) / 3e6, atol=1e-11)
    s = soft_losses([lt([[9.0, -9.0]], (3, -2, 0))], [lt([[-9.0, 9.0]], (-4, 1, 2))], [ex([0])],
                    LossWeights(tau=1e6))
    assert s[0] < 1e-9 and s[1] < 1e-9


def test_kl_value_and_floor():
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert math.isfinite(kl_divergence([0.5, 0.5], [1.0, 0.0]))
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.6], [0.5, 0.5])


def test_weighted_combinations():
    w = LossWeights()
    assert multitask_loss(1.0, 2.0, w) == pytest.approx(0.2 * 1.0 + 0.8 * 2.0)
    assert multitask_loss(1.0, 2.0, w) == pytest.approx(1.8)
    hard, soft = (1.0, 2.0), (0.25, 0.5)
    assert total_student_loss(hard, soft, w) == pytest.approx(0.7 * 1.8 + 0.3 * (0.2 * 0.25 + 0.8 * 0.5))
    assert total_student_loss(hard, soft, w.replace(lambda_kd=0.0)) == pytest.approx(1.8)
    assert total_student_loss((1.0, 1.5), (0.5, 0.0), w.replace(lambda_kd=0.5)) == pytest.approx(
        0.5 * 1.4 + 0.5 * 0.1)


def test_tau_squared_scaling_is_opt_in():
    args = ([lt([[1.0, 0.0]], (1, 0, 0))], [lt([[0.0, 1.0]], (0, 1, 0))], [ex([0])])
    plain = soft_losses(*args, LossWeights(tau=2.0))
    scaled = soft_losses(*args, LossWeights(tau=2.0, scale_kd_by_tau2=True))
    assert scaled[0] == pytest.approx(4 * plain[0]) and scaled[1] == pytest.approx(4 * plain[1])


def test_reasoning_kl_averages_over_unmasked_positions():
    st = lt([[1.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    asst = lt([[0.0, 1.0], [0.0, 1.0], [-5.0, 5.0]])
    _, rea = soft_losses([st], [asst], [ex([0, 1, IGNORE_INDEX])], LossWeights(tau=1.0))
    p_a, p_s = temp_softmax([0.0, 1.0], 1.0), temp_softmax([1.0, 0.0], 1.0)
    assert rea == pytest.approx(kl_divergence(p_a, p_s))


def test_objective_without_assistant_is_hard_multitask():
    parts, _, _ = objective([lt([[0.0, 0.0]])], [ex([0])], LossWeights())
    assert parts.total == pytest.approx(0.2 * math.log(3) + 0.8 * math.log(2))
    assert parts.soft_cls == parts.soft_rea == 0.0


def test_weights_are_validated():
    with pytest.raises(ValueError):
        LossWeights(lambda_kd=1.5)
    with pytest.raises(ValueError):
        LossWeights(tau=0)
    with pytest.raises(FloatingPointError):
        lt([[np.nan, 0.0]])
