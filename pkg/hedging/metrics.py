"""P&L statistics for hedging backtests."""

import numpy as np


class PnLCollector:
    """Collects daily ledger records and computes hedged-NPV statistics."""

    def __init__(self):
        self.records = []

    def add_record(self, record):
        """Add one day's ledger record (a dict with at least 'npv' and 'pnl')."""
        self.records.append(record)

    def compute_metrics(self):
        """
        Compute all statistics from the collected records.

        The first record opens the book and carries no P&L.

        Returns:
            metrics: Dict with computed statistics
        """
        if not self.records:
            return {
                'days': 0,
                'pnl_std': 0.0,
                'pnl_mean': 0.0,
                'drift': 0.0,
                'max_drawdown': 0.0,
                'final_npv': 0.0,
                'pinv_fallbacks': 0,
                'vega_skips': 0
            }

        npv = np.array([r['npv'] for r in self.records], dtype=float)
        pnl = np.array([r['pnl'] for r in self.records[1:]], dtype=float)

        pnl_std = np.std(pnl, ddof=1) if len(pnl) > 1 else 0.0
        pnl_mean = np.mean(pnl) if len(pnl) else 0.0

        # Largest fall from a running peak of the hedged NPV
        running_peak = np.maximum.accumulate(npv)
        max_drawdown = np.max(running_peak - npv)

        return {
            'days': len(self.records),
            'pnl_std': float(pnl_std),
            'pnl_mean': float(pnl_mean),
            'drift': float(npv[-1] - npv[0]),
            'max_drawdown': float(max_drawdown),
            'final_npv': float(npv[-1]),
            'pinv_fallbacks': int(sum(bool(r.get('pinv_fallback')) for r in self.records)),
            'vega_skips': int(sum(bool(r.get('vega_skipped')) for r in self.records))
        }
