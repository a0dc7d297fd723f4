"""Encrypt-then-sign latency per cipher and signature, optionally with transport key reuse.

With ``--reuse`` every RSA signature whose size matches the transport key is
measured twice: once with a dedicated signing pair and once signing with the
transport pair itself.
"""

from dataclasses import replace

from _common import parser, run_on_loopback, sizes

from mwsbench.bench import BenchPlan, latency_report
from mwsbench.crypto import CipherAlg, SignatureAlg, cipher_by_name, signature_by_name
from mwsbench.wssec import Mode


def main():
    p = parser(__doc__.splitlines()[0], "out/secured")
    p.add_argument("--ciphers", default=f"{CipherAlg.AES_256.label},{CipherAlg.TDES_192.label}")
    p.add_argument("--sigs", default=",".join(s.label for s in SignatureAlg))
    p.add_argument("--reuse", action="store_true", help="also measure signing with the transport key")
    args = p.parse_args()
    common = dict(
        modes=(Mode.ENC_SIGN,),
        ciphers=tuple(cipher_by_name(c) for c in args.ciphers.split(",")),
        signatures=tuple(signature_by_name(s) for s in args.sigs.split(",")),
        sizes_kb=sizes(args.sizes), reps=args.reps, warmup=args.warmup,
    )
    records = run_on_loopback(BenchPlan(**common, out_dir=args.out), args.seed)
    if args.reuse:
        reused = run_on_loopback(BenchPlan(**common, reuse_transport_key=True), args.seed)
        records.extend(r for r in reused if r.coord.reuse)
    report = latency_report(records)
    print(report.render())
    if args.reuse:
        print("Transport key reuse (mean processing us, dedicated -> reused):")
        for cell in report.cells:
            if cell.coord.reuse:
                plain = report.cell(replace(cell.coord, reuse=False))
                print(f"  {'/'.join(cell.coord.labels()[1:])} {cell.coord.size_kb} KB: "
                      f"{plain.mean['processing']:.0f} -> {cell.mean['processing']:.0f}")


if __name__ == "__main__":
    main()
