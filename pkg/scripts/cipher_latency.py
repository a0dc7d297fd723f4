"""Full-cycle processing latency of each symmetric cipher, encryption only."""

from _common import parser, run_on_loopback, sizes

from mwsbench.bench import BenchPlan, latency_report
from mwsbench.crypto import CipherAlg, KeyTransportAlg, cipher_by_name
from mwsbench.wssec import Mode


def main():
    p = parser(__doc__, "out/ciphers")
    p.add_argument("--ciphers", default=",".join(c.label for c in CipherAlg))
    p.add_argument("--transport-bits", type=int, choices=(1024, 2048), default=1024)
    args = p.parse_args()
    plan = BenchPlan(
        modes=(Mode.ENC,),
        ciphers=tuple(cipher_by_name(c) for c in args.ciphers.split(",")),
        transports=(KeyTransportAlg.RSA15_1024 if args.transport_bits == 1024 else KeyTransportAlg.RSA15_2048,),
        sizes_kb=sizes(args.sizes), reps=args.reps, warmup=args.warmup, out_dir=args.out,
    )
    print(latency_report(run_on_loopback(plan, args.seed)).render())


if __name__ == "__main__":
    main()
