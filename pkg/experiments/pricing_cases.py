"""Pricing cases on Data Set I and Trade I."""


def get_scenario_config():
    """
    Get pricing experiment configuration.

    Returns:
        config: Dict with experiment parameters
    """
    return {
        'name': 'pricing_cases',
        'trade': 'trade1',
        # Market digital models; σ¹ is re-solved per expiry to the ATM price
        'cases': {
            1: {'kind': 'black'},
            2: {'kind': 'uvdd', 'm': 0.025, 'lam': 1.0},
            3: {'kind': 'uvdd', 'm': 0.05, 'lam': 1.0},
            4: {'kind': 'uvdd', 'm': -0.025, 'lam': 1.0},
            5: {'kind': 'uvdd', 'm': 0.0, 'lam': 0.75, 'omega': 2.0},
            6: {'kind': 'uvdd', 'm': 0.0, 'lam': 0.75, 'omega': 5.0},
            7: {'kind': 'uvdd', 'm': 0.025, 'lam': 0.75, 'omega': 2.0},
            8: {'kind': 'uvdd', 'm': 0.025, 'lam': 0.75, 'omega': 3.0},
        },
        'european_strike': 0.05,  # European table strike
        'bermudan_strikes': [0.035, 0.055, 0.075],
        'bermudan_cases': [1, 2, 3, 5, 6, 7, 8],
        'sweep_strikes': [0.03 + 0.005 * k for k in range(12)],
        'sweep_cases': [1, 8],
        'mean_reversions': [0.0, 0.10],
        # Grid sweep for the convergence table
        'convergence': {
            'case': 8,
            'expiry': 7,
            'steps_range': list(range(1, 11)),
            'deviations_range': list(range(1, 11)),
        },
    }
