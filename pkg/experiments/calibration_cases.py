"""Smile calibration cases on the Trade II strip."""


def get_scenario_config():
    """
    Get calibration experiment configuration.

    Returns:
        config: Dict with experiment parameters
    """
    return {
        'name': 'calibration_cases',
        'trade': 'trade2',
        'cases': [1, 2, 3, 4, 5, 6],
        'lam': 0.75,  # UVDD weight of the low-vol component
        'm_bound': 0.10,  # upper displacement bound of the bounded case
        'offsets_bp': [-100, -75, -50, -25, 0, 25, 50, 75, 100],
        # Smile generating synthetic quotes when no ratio cube is given
        'synthetic_smile': {'m': 0.05, 'omega': 2.5, 'lam': 0.75},
        # Mean-reversion estimator demo
        'mean_reversion': {
            'true_value': 0.03,
            'times': [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            'days': 10000,
        },
    }
