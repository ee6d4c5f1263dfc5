"""Synthetic market history and backtest settings for the hedging runs."""


def get_scenario_config():
    """
    Get hedging scenario configuration.

    Returns:
        config: Dict with scenario parameters
    """
    return {
        'name': 'hedge_scenario',
        'trade': 'hedge',
        'strike': 0.045,
        # Synthetic market
        'start_date': '2004-05-28',
        'days': 300,  # business days, ends before the first reset date
        'level': 0.025,  # par rate at the short end
        'slope': 0.025,  # long end minus short end
        'rate_vol_bp': 5.0,  # daily parallel rate move
        'drift_bp': 0.0,
        'vol_level': 0.18,
        'vol_of_vol': 0.01,  # daily log ATM vol move
        'rate_vol_corr': -0.3,
        'omega_range': (1.5, 3.0),
        'm_range': (0.0, 0.05),
        'lam': 0.75,
        'rate_floor': 0.001,
        'seed': 7,
        # Backtest
        'strategies': ['unhedged', 'delta', 'delta_vega'],
        'mode': 'smile',
        'liquidation': 'mark_to_market',
        'vega_roll': 'daily',
        'mean_reversion': 0.0,
        # Refit the hedging model to the market smile each day instead of using
        # it directly, e.g. {'offsets_bp': [-100, 0, 100], 'lam': 0.5, 'm_bound': 0.05}
        'calibration': None,
    }
