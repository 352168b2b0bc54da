import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdelta import DeltaTable, TimescaleSchedule


def test_schedule_defaults():
    sched = TimescaleSchedule(gammas=[0.5, 0.9])
    np.testing.assert_array_equal(sched.ks, [1, 1])
    np.testing.assert_array_equal(sched.lambdas, [0.0, 0.0])
    np.testing.assert_array_equal(sched.alphas, [0.1, 0.1])
    assert sched.n_scales == 2
    assert sched.k_max == 1


def test_schedule_validation_messages():
    with pytest.raises(ValueError, match="nondecreasing"):
        TimescaleSchedule(gammas=[0.9, 0.5])
    with pytest.raises(ValueError, match=r"\[0, 1\)"):
        TimescaleSchedule(gammas=[1.0])
    with pytest.raises(ValueError, match="positive integer"):
        TimescaleSchedule(gammas=[0.5], ks=[0])
    with pytest.raises(ValueError, match="lambda_z \\* gamma_z"):
        TimescaleSchedule(gammas=[0.9], lambdas=[1.2])
    with pytest.raises(ValueError, match=r"alpha must lie in \(0, 1\]"):
        TimescaleSchedule(gammas=[0.5], alphas=[0.0])
    with pytest.raises(ValueError, match="at least one scale"):
        TimescaleSchedule(gammas=[])
    with pytest.raises(ValueError, match="length"):
        TimescaleSchedule(gammas=[0.5, 0.9], ks=[1])


def test_schedule_monotone_k_mode():
    with pytest.raises(ValueError, match="monotone-k"):
        TimescaleSchedule(gammas=[0.5, 0.9], ks=[4, 2], monotone_k=True)
    TimescaleSchedule(gammas=[0.5, 0.9], ks=[4, 2])  # fine without the flag


@given(st.lists(st.floats(0.0, 0.99), min_size=1, max_size=5))
def test_schedule_accepts_any_sorted_gamma_ladder(gammas):
    sched = TimescaleSchedule(gammas=sorted(gammas))
    assert sched.validation_errors() == []


def test_gamma_powers_matches_exponentiation():
    sched = TimescaleSchedule(gammas=[0.3, 0.9])
    table = sched.gamma_powers(6)
    for z, g in enumerate([0.3, 0.9]):
        np.testing.assert_allclose(table[z], [g ** j for j in range(7)],
                                   rtol=1e-14)
    assert table[0, 0] == 1.0 and table[1, 0] == 1.0


def test_schedule_dict_round_trip():
    sched = TimescaleSchedule(gammas=[0.5, 0.9], ks=[2, 10],
                              lambdas=[0.4, 0.2], alphas=[0.1, 0.05])
    back = TimescaleSchedule.from_dict(sched.to_dict())
    np.testing.assert_array_equal(back.gammas, sched.gammas)
    np.testing.assert_array_equal(back.ks, sched.ks)
    np.testing.assert_array_equal(back.lambdas, sched.lambdas)
    np.testing.assert_array_equal(back.alphas, sched.alphas)


def test_delta_table_partial_sums_and_reconstruct():
    sched = TimescaleSchedule(gammas=[0.5, 0.9])
    w = np.array([[[1.0, 2.0]], [[10.0, 20.0]]])
    table = DeltaTable(w, sched)
    np.testing.assert_array_equal(table.partial_sum(0), [[1.0, 2.0]])
    np.testing.assert_array_equal(table.partial_sum(1), [[11.0, 22.0]])
    np.testing.assert_array_equal(table.reconstruct(), table.partial_sum(1))
    assert table.n_states == 1 and table.n_actions == 2


def test_delta_table_zeros_and_copy_isolation():
    sched = TimescaleSchedule(gammas=[0.5, 0.9])
    table = DeltaTable.zeros(sched, 3, 2)
    assert table.w.shape == (2, 3, 2)
    dup = table.copy()
    dup.w[0, 0, 0] = 5.0
    assert table.w[0, 0, 0] == 0.0


def test_delta_table_validation():
    sched = TimescaleSchedule(gammas=[0.5, 0.9])
    with pytest.raises(ValueError, match="scale dimension"):
        DeltaTable(np.zeros((3, 2, 2)), sched)
    with pytest.raises(ValueError, match="finite"):
        DeltaTable(np.full((2, 2, 2), np.nan), sched)


def test_delta_table_json_round_trip():
    sched = TimescaleSchedule(gammas=[0.5, 0.9], ks=[2, 10])
    table = DeltaTable(np.arange(8, dtype=np.float64).reshape(2, 2, 2), sched)
    back = DeltaTable.from_json(table.to_json())
    np.testing.assert_array_equal(back.w, table.w)
    np.testing.assert_array_equal(back.schedule.ks, sched.ks)
