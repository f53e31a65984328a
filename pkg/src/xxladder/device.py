"""Measured parameters of the 18 qubits used for the chain and ladder.

Chain sites 0..11 are Q1..Q12. Ladder leg 0 is Q1..Q6, leg 1 is Q13..Q18,
flattened as ``leg * W + rung``.
"""

QUBITS = tuple(f"Q{i}" for i in range(1, 19))

# J/2pi in MHz at the 4.863 GHz working point
CHAIN_COUPLINGS_MHZ = {
    ("Q1", "Q2"): 12.2,
    ("Q2", "Q3"): 12.2,
    ("Q3", "Q4"): 12.1,
    ("Q4", "Q5"): 12.0,
    ("Q5", "Q6"): 12.3,
    ("Q6", "Q7"): 13.2,
    ("Q7", "Q8"): 12.5,
    ("Q8", "Q9"): 12.5,
    ("Q9", "Q10"): 12.2,
    ("Q10", "Q11"): 12.2,
    ("Q11", "Q12"): 12.2,
}

UPPER_LEG_COUPLINGS_MHZ = {
    ("Q13", "Q14"): 12.4,
    ("Q14", "Q15"): 12.3,
    ("Q15", "Q16"): 12.4,
    ("Q16", "Q17"): 12.4,
    ("Q17", "Q18"): 12.2,
}

RUNG_COUPLINGS_MHZ = {
    ("Q1", "Q13"): 13.3,
    ("Q2", "Q14"): 13.6,
    ("Q3", "Q15"): 13.7,
    ("Q4", "Q16"): 13.8,
    ("Q5", "Q17"): 13.7,
    ("Q6", "Q18"): 13.6,
}

T1_US = dict(zip(QUBITS, (
    24.3, 22.8, 26.5, 24.0, 28.8, 25.9, 19.5, 28.5, 20.5,
    17.9, 31.8, 13.1, 16.6, 22.4, 12.4, 24.4, 23.9, 21.4,
)))

T2STAR_US = dict(zip(QUBITS, (
    5.2, 2.0, 1.8, 2.2, 6.2, 1.8, 5.5, 2.3, 4.1,
    2.0, 10.4, 2.3, 2.7, 2.9, 4.6, 10.4, 2.5, 3.2,
)))

ANHARMONICITY_MHZ = dict(zip(QUBITS, (
    -238, -230, -240, -230, -238, -230, -240, -230, -236,
    -230, -236, -230, -226, -236, -226, -236, -228, -236,
)))

XEB_FIDELITY_PERCENT = dict(zip(QUBITS, (
    99.91, 99.87, 99.92, 99.86, 99.91, 99.88, 99.87, 99.88, 99.84,
    99.75, 99.88, 99.87, 99.89, 99.70, 99.72, 99.85, 99.85, 99.94,
)))

# residual frequency drifts after calibration (MHz), site order as above
CHAIN_DRIFT_MHZ = (0.3, 0.2, 0.3, 0.3, 0.2, 1.5, 0.0, 0.3, 0.5, 0.3, 0.1, 2.2)
LADDER_DRIFT_MHZ = (0.0, 0.2, 0.1, 0.1, 0.5, 0.4, 0.1, 0.3, 0.7, 0.3, 0.4, 0.2)

WORKING_FREQUENCY_MHZ = 4863.0


def chain_qubit(site: int) -> str:
    return f"Q{site + 1}"


def ladder_qubit(site: int, width: int) -> str:
    leg, rung = divmod(site, width)
    return f"Q{rung + 1}" if leg == 0 else f"Q{13 + rung}"


def site_qubits(topology: str, num_sites: int) -> list[str]:
    if topology == "chain":
        return [chain_qubit(i) for i in range(num_sites)]
    if topology == "ladder":
        return [ladder_qubit(i, num_sites // 2) for i in range(num_sites)]
    raise ValueError(f"unknown topology {topology!r}")


def all_couplings_mhz() -> dict[tuple[str, str], float]:
    return {**CHAIN_COUPLINGS_MHZ, **UPPER_LEG_COUPLINGS_MHZ, **RUNG_COUPLINGS_MHZ}
