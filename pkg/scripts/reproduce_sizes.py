"""Measure response sizes for the four security modes and compare the overhead structure.

The recommended suite (AES-256, RSA-1024 key transport, RSA-SHA1 signatures)
is used throughout. Absolute sizes depend on the serializer; the constant
overheads and the encryption growth rate are what should carry over.
"""

import statistics

from _common import parser, run_on_loopback, sizes

from mwsbench.bench import REFERENCE_SIZES, BenchPlan, size_table
from mwsbench.wssec import Mode


def overheads(rows, ks):
    plain, sign, enc, encsign = (rows[m] for m in (Mode.PLAIN, Mode.SIGN, Mode.ENC, Mode.ENC_SIGN))
    return {
        "signature overhead": [s - p for s, p in zip(sign, plain)],
        "signature on top of encryption": [es - e for es, e in zip(encsign, enc)],
        "encryption growth (bytes out per byte in)": [
            (enc[-1] - enc[0]) / (plain[-1] - plain[0])] if len(ks) > 1 else [],
    }


def main():
    args = parser(__doc__.splitlines()[0], "out/sizes").parse_args()
    ks = sizes(args.sizes)
    plan = BenchPlan(sizes_kb=ks, reps=args.reps, warmup=args.warmup, out_dir=args.out)
    table = size_table(run_on_loopback(plan, args.seed))
    print()
    print(table.render())
    print()
    measured = {m: table.row(m) for m in Mode}
    reference = {m: [REFERENCE_SIZES[m].get(k) for k in ks] for m in Mode}
    have_ref = all(v is not None for row in reference.values() for v in row)
    for name, values in overheads(measured, ks).items():
        line = f"{name:45s} measured " + ", ".join(f"{v:.4g}" for v in values)
        if have_ref:
            ref = overheads(reference, ks)[name]
            line += "   reference " + ", ".join(f"{v:.4g}" for v in ref)
        print(line)
    if len(ks) > 2:
        xs = [k * 1024 for k in ks]
        r2 = {m.value: statistics.correlation(xs, measured[m]) ** 2 for m in Mode}
        print("linearity (R^2): " + ", ".join(f"{k} {v:.6f}" for k, v in r2.items()))


if __name__ == "__main__":
    main()
