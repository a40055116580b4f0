import logging
import numpy as np
import pandas as pd
import tqdm

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    'arm', 'seed', 'mode', 'test_top1', 'test_top1_err', 'val_kl',
    'train_loss', 'n_anchors', 'n_steps')


def cut_nones(values):
    """Drop entries that are None or non-finite.

    Parameters
    ----------
    values : list
        The values.

    Returns
    -------
    kept : np.ndarray
        The finite values, as float64.
    """
    kept = [v for v in values if v is not None]
    kept = np.array(kept, dtype=np.float64)
    return kept[np.isfinite(kept)]


def estimate_median_and_err(values, n_boot=500, seed=100):
    """Estimate the median of a set of per-seed results.

    Parameters
    ----------
    values : list of float
        The per-seed values. Nones and non-finite entries are ignored.
    n_boot : int, optional
        Number of bootstrap resamples. Default 500.
    seed : int, optional
        Seed for the bootstrap. Default 100.

    Returns
    -------
    median : float
        The median, or NaN if nothing is left.
    err : float
        Bootstrap estimate of the 1-sigma standard error of the median. Zero
        for a single value.
    """
    vals = cut_nones(values)
    if len(vals) == 0:
        return np.nan, np.nan
    if len(vals) == 1:
        return float(vals[0]), 0.0

    rng = np.random.RandomState(seed=seed)
    meds = []
    for _ in tqdm.trange(n_boot, leave=False):
        ind = rng.choice(len(vals), replace=True, size=len(vals))
        meds.append(np.median(vals[ind]))

    return float(np.median(vals)), float(np.std(meds))


def summarize_arms(reports):
    """Build the arm comparison table.

    Parameters
    ----------
    reports : list of dict
        Report dicts (`RunReport.to_dict()`), any order.

    Returns
    -------
    summary : pd.DataFrame
        One row per arm and seed, ordered by arm then seed, followed for each
        arm by a row with seed 'median' holding the per-column medians and,
        for `test_top1`, a bootstrap error.
    """
    rows = []
    for rep in reports:
        final = rep.get('final', {})
        rows.append({
            'arm': rep['name'],
            'seed': rep['seed'],
            'mode': rep['mode'],
            'test_top1': final.get('test_top1'),
            'test_top1_err': None,
            'val_kl': final.get('val_kl'),
            'train_loss': final.get('train_loss'),
            'n_anchors': len(rep.get('anchor_epochs', [])),
            'n_steps': rep.get('n_steps'),
        })

    arms = []
    for row in rows:
        if row['arm'] not in arms:
            arms.append(row['arm'])

    out = []
    for arm in arms:
        arm_rows = sorted(
            [r for r in rows if r['arm'] == arm], key=lambda r: r['seed'])
        out.extend(arm_rows)

        med, err = estimate_median_and_err([r['test_top1'] for r in arm_rows])
        kl_med, _ = estimate_median_and_err([r['val_kl'] for r in arm_rows])
        loss_med, _ = estimate_median_and_err(
            [r['train_loss'] for r in arm_rows])
        out.append({
            'arm': arm,
            'seed': 'median',
            'mode': arm_rows[0]['mode'],
            'test_top1': med,
            'test_top1_err': err,
            'val_kl': kl_med,
            'train_loss': loss_med,
            'n_anchors': arm_rows[0]['n_anchors'],
            'n_steps': arm_rows[0]['n_steps'],
        })
        logger.info(
            'arm %s: median test top-1 %.4f +/- %.4f over %d seeds',
            arm, med, err, len(arm_rows))

    return pd.DataFrame(
        [[r[c] for c in SUMMARY_COLUMNS] for r in out],
        columns=list(SUMMARY_COLUMNS))
