"""Full-cycle processing latency of each signature algorithm, signing only."""

from _common import parser, run_on_loopback, sizes

from mwsbench.bench import BenchPlan, latency_report
from mwsbench.crypto import SignatureAlg, signature_by_name
from mwsbench.wssec import Mode


def main():
    p = parser(__doc__, "out/signatures")
    p.add_argument("--sigs", default=",".join(s.label for s in SignatureAlg))
    args = p.parse_args()
    plan = BenchPlan(
        modes=(Mode.SIGN,),
        signatures=tuple(signature_by_name(s) for s in args.sigs.split(",")),
        sizes_kb=sizes(args.sizes), reps=args.reps, warmup=args.warmup, out_dir=args.out,
    )
    print(latency_report(run_on_loopback(plan, args.seed)).render())


if __name__ == "__main__":
    main()
