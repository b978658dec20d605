"""Brute-force tally oracles shared by the metric and acceptance tests.

Kept deliberately independent of the library: plain Python ints, one
position or record at a time.
"""


def brute_force_sequence(preds, truths, class_count):
    tp = [0] * class_count
    fp = [0] * class_count
    fn = [0] * class_count
    support = [0] * class_count
    for p, t in zip(preds, truths):
        for pi, ti in zip(p, t):
            pi, ti = int(pi), int(ti)
            support[ti] += 1
            if pi == ti:
                tp[ti] += 1
            else:
                fn[ti] += 1
                fp[pi] += 1
    return tp, fp, fn, support


def brute_force_set(preds, truths, class_count):
    tp = [0] * class_count
    fp = [0] * class_count
    fn = [0] * class_count
    for p, t in zip(preds, truths):
        pset, tset = set(int(v) for v in p), set(int(v) for v in t)
        for c in range(class_count):
            if c in pset and c in tset:
                tp[c] += 1
            elif c in tset:
                fn[c] += 1
            elif c in pset:
                fp[c] += 1
    return tp, fp, fn


def brute_force_f1(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0
