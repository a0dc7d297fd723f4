import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwsbench.cli import (
    EXIT_IO,
    EXIT_NETWORK,
    EXIT_OK,
    EXIT_SECURITY,
    EXIT_USAGE,
    UsageError,
    main,
    parse_args,
    policy_from_args,
)
from mwsbench.crypto import CipherAlg, KeyTransportAlg, SignatureAlg
from mwsbench.keys import generate_ring, pair_rings, save_peer_keys, save_ring
from mwsbench.wssec import Mode, SecurityPolicy


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_arguments_is_a_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == EXIT_USAGE and "command is required" in err


def test_unknown_flag_prints_usage(capsys):
    code, _, err = run(capsys, "invoke", "--bogus")
    assert code == EXIT_USAGE and "usage:" in err and "--bogus" in err


def test_help_exits_cleanly(capsys):
    code, out, _ = run(capsys, "bench", "--help")
    assert code == EXIT_OK and "--full-matrix" in out


def test_recommended_suite_example_maps_to_policy():
    args = parse_args(["invoke", "--security", "encsign", "--cipher", "aes256", "--transport", "rsa1024",
                       "--sig", "rsa-sha1-1024"])
    assert policy_from_args(args) == SecurityPolicy(
        Mode.ENC_SIGN, CipherAlg.AES_256, KeyTransportAlg.RSA15_1024, SignatureAlg.RSA_SHA1_1024)


def test_defaults_fill_in_algorithms():
    assert policy_from_args(parse_args(["invoke", "--security", "enc"])) == SecurityPolicy(
        Mode.ENC, CipherAlg.AES_256, KeyTransportAlg.RSA15_1024)
    assert policy_from_args(parse_args(["invoke"])) == SecurityPolicy()


@pytest.mark.parametrize("argv, names", [
    (["--security", "sign", "--cipher", "aes256"], ["--cipher", "--security sign"]),
    (["--security", "plain", "--sig", "dsa-sha1-1024"], ["--sig", "--security plain"]),
    (["--security", "enc", "--reuse-transport-key"], ["--reuse-transport-key", "--security enc"]),
    (["--security", "sign", "--transport", "rsa1024"], ["--transport", "--security sign"]),
    (["--security", "sign", "--scope", "result"], ["--scope", "--security sign"]),
    (["--security", "encsign", "--sig", "dsa-sha1-1024", "--reuse-transport-key"],
     ["--reuse-transport-key", "--sig dsa-sha1-1024"]),
    (["--security", "encsign", "--transport", "rsa1024", "--sig", "rsa-sha1-2048", "--reuse-transport-key"],
     ["--reuse-transport-key", "--transport rsa1024", "--sig rsa-sha1-2048"]),
    (["--security", "enc", "--cipher", "idea256"], ["--cipher"]),
])
def test_conflicts_name_the_flags(capsys, argv, names):
    code, _, err = run(capsys, "invoke", *argv)
    assert code == EXIT_USAGE
    for n in names:
        assert n in err


CHOICES = {
    "--cipher": [None] + [c.label for c in CipherAlg] + ["idea256", "rc4"],
    "--transport": [None, "rsa1024", "rsa2048", "rsa4096"],
    "--sig": [None] + [s.label for s in SignatureAlg],
    "--scope": [None, "result"],
}


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([m.value for m in Mode]), st.fixed_dictionaries({k: st.sampled_from(v) for k, v in
                                                                         CHOICES.items()}), st.booleans())
def test_every_flag_combination_is_a_policy_or_a_named_conflict(mode, flags, reuse):
    argv = ["invoke", "--security", mode]
    for k, v in flags.items():
        if v is not None:
            argv += [k, v]
    if reuse:
        argv.append("--reuse-transport-key")
    args = parse_args(argv)
    try:
        policy = policy_from_args(args)
    except UsageError as exc:
        given_flags = [k for k, v in flags.items() if v is not None] + (["--reuse-transport-key"] if reuse else [])
        assert any(f in str(exc) for f in given_flags), str(exc)
        return
    assert isinstance(policy, SecurityPolicy) and policy.mode is Mode(mode)


# -- config files -------------------------------------------------------------

def test_config_precedence(tmp_path):
    cfg = tmp_path / "bench.conf"
    cfg.write_text("# benchmark settings\nreps = 7\nsizes = 1,2\nfull-matrix = true  # cross all\nout = cfg-out\n")
    args = parse_args(["bench", "--config", str(cfg), "--reps", "9"])
    assert args.reps == 9 and args.sizes == (1, 2) and args.full_matrix is True and args.out == "cfg-out"
    assert parse_args(["bench"]).reps == 5


@pytest.mark.parametrize("text, fragment", [
    ("nonsense = 1\n", "unknown setting"),
    ("full_matrix = maybe\n", "true or false"),
    ("reps = many\n", "bad value"),
    ("just a line\n", "name = value"),
])
def test_bad_config(capsys, tmp_path, text, fragment):
    cfg = tmp_path / "c.conf"
    cfg.write_text(text)
    code, _, err = run(capsys, "bench", "--config", str(cfg))
    assert code == EXIT_USAGE and fragment in err


def test_security_choice_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.conf"
    cfg.write_text("security = loud\n")
    assert run(capsys, "invoke", "--config", str(cfg))[0] == EXIT_USAGE
    cfg.write_text("security = enc\n")
    assert policy_from_args(parse_args(["invoke", "--config", str(cfg)])).mode is Mode.ENC


def test_missing_config_file(capsys, tmp_path):
    assert run(capsys, "invoke", "--config", str(tmp_path / "absent"))[0] == EXIT_USAGE


# -- commands -----------------------------------------------------------------

def test_invoke_on_private_loopback(capsys):
    code, out, _ = run(capsys, "invoke", "--security", "encsign", "--cipher", "aes256", "--transport", "rsa1024",
                       "--sig", "rsa-sha1-1024", "--deterministic")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["policy"] == "encsign/aes256/rsa1024/rsa-sha1-1024"
    assert doc["fix"]["longitude"] == 606428 and doc["processing_us"] > 0


def test_keygen_writes_a_loadable_directory(capsys, tmp_path):
    code, out, _ = run(capsys, "keygen", "--owner", "client", "--out", str(tmp_path), "--transport-bits", "1024")
    assert code == EXIT_OK and "wrote 4 key pairs" in out
    assert sorted(p.name for p in tmp_path.iterdir())[0] == "client.sign-dsa-sha1-1024.xml"
    assert run(capsys, "keygen", "--owner", "x", "--out", str(tmp_path), "--peer", "y")[0] == EXIT_USAGE
    assert run(capsys, "keygen", "--owner", "x")[0] == EXIT_USAGE


def _key_dir(tmp_path, topology, client_ring=None):
    """Client key directory for the shared topology's host; the client ring defaults to the registered one."""
    ring = client_ring or topology.client_keys
    ring = type(ring)("client", ring.transport, ring.signing,
                      dict(topology.client_keys.peer_transport), dict(topology.client_keys.peer_signing))
    save_ring(tmp_path, ring)
    save_peer_keys(tmp_path, ring)
    return str(tmp_path)


def test_invoke_remote_host_with_key_directory(capsys, tmp_path, topology):
    keys = _key_dir(tmp_path, topology)
    code, out, _ = run(capsys, "invoke", "--host", topology.endpoint, "--keys", keys, "--security", "encsign")
    assert code == EXIT_OK and json.loads(out)["fix"]["latitude"] == 5079068


def test_response_to_unregistered_client_is_a_security_error(capsys, tmp_path, topology):
    # the host encrypts its answer to the client key it knows, which this client lacks
    keys = _key_dir(tmp_path, topology, generate_ring("client", transport_bits=(1024,)))
    code, _, err = run(capsys, "invoke", "--host", topology.endpoint, "--keys", keys, "--security", "enc")
    assert code == EXIT_SECURITY and "security error" in err


def test_host_security_fault_exit_code(capsys, tmp_path, topology):
    ring, fake_host = generate_ring("client"), generate_ring("host")
    pair_rings(ring, fake_host)
    save_ring(tmp_path, ring)
    save_peer_keys(tmp_path, ring)
    code, _, err = run(capsys, "invoke", "--host", topology.endpoint, "--keys", str(tmp_path), "--security", "enc")
    assert code == EXIT_SECURITY and "Client.Security" in err


def test_unreachable_host_exit_code(capsys, tmp_path, topology):
    keys = _key_dir(tmp_path, topology)
    code, _, _ = run(capsys, "invoke", "--host", "http://127.0.0.1:9/", "--keys", keys, "--timeout", "2")
    assert code == EXIT_NETWORK


def test_remote_host_needs_key_material(capsys, topology):
    assert run(capsys, "invoke", "--host", topology.endpoint)[0] == EXIT_USAGE
    assert run(capsys, "invoke", "--keys", "somewhere")[0] == EXIT_USAGE


def test_unwritable_output_is_an_io_error(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(capsys, "bench", "--out", str(blocker / "sub"), "--mode", "plain", "--sizes", "1",
                     "--warmup", "0")
    assert code == EXIT_IO


@pytest.mark.parametrize("argv", [["--reps", "3"], ["--mode", "loud"], ["--ciphers", "rc4"], ["--sizes", "0"]])
def test_bench_argument_validation(capsys, argv):
    code, _, err = run(capsys, "bench", *argv)
    assert code == EXIT_USAGE and argv[0] in err


def _byte_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [(r["mode"], r["cipher"], r["transport"], r["signature"], r["size_kb"], r["rep"],
             r["request_bytes"], r["response_bytes"]) for r in rows]


def test_bench_deterministic_twice(capsys, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, stdout, _ = run(capsys, "bench", "--deterministic", "--sizes", "1,2", "--warmup", "0",
                              "--out", str(out))
        assert code == EXIT_OK and "Secured message size" in stdout
        outs.append(out)
    a, b = outs
    assert (a / "sizes.txt").read_bytes() == (b / "sizes.txt").read_bytes()
    assert _byte_columns(a / "records.csv") == _byte_columns(b / "records.csv")


def test_bench_resumes_and_fresh_discards(capsys, tmp_path):
    argv = ["bench", "--mode", "plain", "--sizes", "1", "--warmup", "0", "--out", str(tmp_path)]
    assert run(capsys, *argv)[0] == EXIT_OK
    jsonl = tmp_path / "records.jsonl"
    assert len(jsonl.read_text().splitlines()) == 5
    assert run(capsys, *argv)[0] == EXIT_OK
    assert len(jsonl.read_text().splitlines()) == 5
    assert run(capsys, *argv, "--fresh", "--reps", "6")[0] == EXIT_OK
    assert len(jsonl.read_text().splitlines()) == 6
