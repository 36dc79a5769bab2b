import numpy as np
import pytest

from gmwb_hhw.cli import data_path
from gmwb_hhw.contract import (ContractParams, GmwbState, MortalityTable,
                               NegativeWithdrawal, TimeOutOfRange,
                               WithdrawalExceedsBenefit, apply_withdrawal,
                               death_benefit, final_payoff, net_cash_flow)


@pytest.fixture
def contract():
    return ContractParams(P=100.0, T=10, alpha=0.035, kappa=0.10)


class TestNetCashFlow:
    def test_below_guarantee(self, contract):
        assert net_cash_flow(8.0, contract) == 8.0

    def test_above_guarantee_penalized(self, contract):
        # 15 - 0.1 * (15 - 10)
        assert net_cash_flow(15.0, contract) == pytest.approx(14.5)

    def test_zero_penalty_is_identity(self):
        c = ContractParams(P=100.0, T=10, alpha=0.0, kappa=0.0)
        for w in (0.0, 5.0, 10.0, 60.0, 100.0):
            assert net_cash_flow(w, c) == w

    def test_negative_withdrawal_rejected(self, contract):
        with pytest.raises(NegativeWithdrawal):
            net_cash_flow(-1.0, contract)

    def test_never_exceeds_withdrawal_and_monotone(self, contract):
        w = np.linspace(0.0, 100.0, 401)
        f = np.array([net_cash_flow(x, contract) for x in w])
        assert np.all(f <= w + 1e-12)
        assert np.all(np.diff(f) >= 0.0)
        # equality exactly up to the guarantee
        assert np.all((f == w) == (w <= contract.G))


class TestStateUpdate:
    def test_zero_withdrawal_identity(self):
        s = GmwbState(A=70.0, B=90.0)
        assert apply_withdrawal(s, 0.0) == s

    def test_account_floors_at_zero(self):
        s = apply_withdrawal(GmwbState(A=50.0, B=80.0), 60.0)
        assert (s.A, s.B) == (0.0, 20.0)

    def test_full_surrender(self):
        s = apply_withdrawal(GmwbState(A=100.0, B=100.0), 100.0)
        assert (s.A, s.B) == (0.0, 0.0)

    def test_overdraw_rejected(self):
        with pytest.raises(WithdrawalExceedsBenefit):
            apply_withdrawal(GmwbState(A=10.0, B=5.0), 6.0)

    def test_monotone_in_state(self):
        s = apply_withdrawal(GmwbState(A=40.0, B=90.0), 25.0)
        assert s.A <= 40.0 and s.B <= 90.0


class TestPayoffs:
    def test_death_benefit_tie(self):
        assert death_benefit(GmwbState(A=90.0, B=100.0), 0.10) == 90.0

    def test_death_benefit_account_exhausted(self):
        assert death_benefit(GmwbState(A=0.0, B=100.0), 0.10) == 90.0

    def test_death_benefit_full_penalty(self):
        assert death_benefit(GmwbState(A=42.0, B=100.0), 1.0) == 42.0

    def test_final_payoff_matches_functional_form(self):
        for a, b, k in ((90.0, 100.0, 0.1), (0.0, 100.0, 0.1), (42.0, 100.0, 1.0)):
            s = GmwbState(A=a, B=b)
            assert final_payoff(s, k) == death_benefit(s, k)


class TestMortality:
    def test_survivor_starts_at_one(self):
        t = MortalityTable([0.02, 0.03])
        assert t.survivor_fraction(0.0) == 1.0

    def test_single_year_table(self):
        t = MortalityTable([0.02])
        assert t.survivor_fraction(1.0) == pytest.approx(0.98)

    def test_death_weights_telescope(self):
        q = [0.01, 0.015, 0.02, 0.025]
        t = MortalityTable(q)
        for i in range(1, 5):
            left = t.survivor_fraction(i - 1) - t.survivor_fraction(i)
            assert left == pytest.approx(q[i - 1], abs=1e-15)
            assert t.death_weight(i) == pytest.approx(q[i - 1], abs=1e-15)

    def test_piecewise_linear_between_anniversaries(self):
        t = MortalityTable([0.1, 0.2])
        assert t.survivor_fraction(0.5) == pytest.approx(0.95)
        assert t.survivor_fraction(1.5) == pytest.approx(0.9 - 0.1)

    def test_non_increasing_and_total_mass(self):
        q = [0.01, 0.02, 0.03, 0.04]
        t = MortalityTable(q)
        grid = np.linspace(0.0, 4.0, 101)
        vals = t.survivor_fraction(grid)
        assert np.all(np.diff(vals) <= 1e-15)
        assert sum(q) + t.survivor_fraction(4.0) == pytest.approx(1.0)

    def test_time_out_of_range(self):
        t = MortalityTable([0.02])
        with pytest.raises(TimeOutOfRange):
            t.survivor_fraction(1.5)
        with pytest.raises(TimeOutOfRange):
            t.death_weight(2)

    def test_invalid_probabilities(self):
        with pytest.raises(ValueError):
            MortalityTable([-0.1])
        with pytest.raises(ValueError):
            MortalityTable([0.6, 0.6])

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "mort.csv"
        path.write_text("year,death_probability\n1,0.01\n2,0.02\n")
        t = MortalityTable.from_csv(path)
        assert np.allclose(t.q, [0.01, 0.02])

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "mort.csv"
        path.write_text("age,qx\n1,0.01\n")
        with pytest.raises(ValueError):
            MortalityTable.from_csv(path)

    def test_csv_gap_in_years(self, tmp_path):
        path = tmp_path / "mort.csv"
        path.write_text("year,death_probability\n1,0.01\n3,0.02\n")
        with pytest.raises(ValueError):
            MortalityTable.from_csv(path)

    def test_bundled_tables_load(self):
        zero = MortalityTable.from_csv(data_path("mortality_zero.csv"))
        assert zero.years >= 10 and np.all(zero.q == 0.0)
        sample = MortalityTable.from_csv(data_path("mortality_sample.csv"))
        assert sample.years >= 10
        assert 0.5 < sample.survivor_fraction(10.0) < 1.0


class TestContractParams:
    def test_guarantee_defaults_to_premium_over_maturity(self, contract):
        assert contract.G == pytest.approx(10.0)
        assert contract.mortality.years == 10

    def test_validation(self):
        with pytest.raises(ValueError):
            ContractParams(P=-1.0, T=10, alpha=0.0, kappa=0.0)
        with pytest.raises(ValueError):
            ContractParams(P=100.0, T=0, alpha=0.0, kappa=0.0)
        with pytest.raises(ValueError):
            ContractParams(P=100.0, T=10, alpha=0.0, kappa=1.5)
        with pytest.raises(ValueError):
            ContractParams(P=100.0, T=10, alpha=0.0, kappa=0.0, G=200.0)
        with pytest.raises(ValueError):
            ContractParams(P=100.0, T=10, alpha=0.0, kappa=0.0,
                           mortality=MortalityTable([0.01] * 5))
