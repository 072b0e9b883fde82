"""Shared reference configurations (seat and deck-seat with cubic NES)."""

import pytest

from pdsynth.montecarlo import ForcingModel
from pdsynth.spectra import BackgroundSpectrum
from pdsynth.statlin import solve_fixed_point
from pdsynth.systems import Attachment, SpringLaw, deck_seat_model, seat_model

Q = 1.582e-4


def reference_forcing(shift: float = 1.0) -> ForcingModel:
    return ForcingModel(BackgroundSpectrum(Q, shift), 5000.0, 0.1, 0.0141)


def seat_nes():
    return seat_model(attachment=Attachment(0.05, 0.021, SpringLaw.cubic(3.461)))


def deck_nes():
    return deck_seat_model(attachment=Attachment(0.05, 0.035, SpringLaw.cubic(5.86)))


@pytest.fixture(scope="session")
def forcing():
    return reference_forcing()


@pytest.fixture(scope="session")
def seat():
    return seat_nes()


@pytest.fixture(scope="session")
def deck():
    return deck_nes()


@pytest.fixture(scope="session")
def seat_lin(seat, forcing):
    return solve_fixed_point(seat, forcing.spectrum)


@pytest.fixture(scope="session")
def deck_lin(deck, forcing):
    return solve_fixed_point(deck, forcing.spectrum)


@pytest.fixture(scope="session")
def seat_rare(seat, forcing, seat_lin):
    from pdsynth.rare import eta_from, rare_pdf_simulated
    return rare_pdf_simulated(seat, eta_from(forcing, seat_lin), forcing.T_alpha)


@pytest.fixture(scope="session")
def deck_rare(deck, forcing, deck_lin):
    from pdsynth.rare import eta_from, rare_pdf_simulated
    return rare_pdf_simulated(deck, eta_from(forcing, deck_lin), forcing.T_alpha)


# acceptance criterion number -> one-line verdict, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
