"""Future smile and smile dynamics experiments on Trade I."""


def get_scenario_config():
    """
    Get future-smile experiment configuration.

    Returns:
        config: Dict with experiment parameters
    """
    return {
        'name': 'future_smile',
        'trade': 'trade1',
        'case': 8,
        'standing_date': 3,  # condition on X(T_3)
        'state': 0.0,  # conditioning node
        'expiries': [5, 7, 9],
        'mean_reversions': [0.0, 0.10, 0.30],
        'offsets_bp': [-200, -150, -100, -50, 0, 50, 100, 150, 200],
        'band': 1.0,  # ATM averaging band in driver standard deviations
        # Smile dynamics: move D_5(0) and keep the model parameters
        'dynamics': {
            'case': 6,
            'expiry': 5,
            'df_bump': 0.01,
            'offsets_bp': [-200, -100, -50, 0, 50, 100, 200],
        },
    }
