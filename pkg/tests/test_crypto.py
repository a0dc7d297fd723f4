import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import katlib
from mwsbench import crypto
from mwsbench.crypto import (
    CipherAlg,
    KeyTransportAlg,
    SignatureAlg,
    SymmetricKey,
    cipher_by_name,
    cipher_by_uri,
    decrypt_cbc,
    encrypt_cbc,
    gen_iv,
    gen_symmetric_key,
    generate_keypair,
    sign,
    signature_by_name,
    transport_by_name,
    unwrap_key,
    verify,
    wrap_key,
)
from mwsbench.errors import (
    DecryptionFailure,
    InvalidArgument,
    InvalidKey,
    KeyUnwrapFailure,
    MalformedCiphertext,
    UnsupportedAlgorithm,
)
from oracles import cbc
from oracles import dsa as odsa
from oracles import rsa as orsa


@pytest.mark.parametrize("name", sorted(katlib.SUITES))
def test_cipher_known_answers(name):
    assert katlib.check_cipher(name) >= 3


def test_sha1_known_answers():
    assert katlib.check_sha1() >= 6


def test_rsa_signature_known_answers():
    assert katlib.check_rsa_sign() >= 1


def test_rsa_encryption_known_answers():
    assert katlib.check_rsa_crypt() >= 1


@pytest.fixture(scope="module")
def keypairs():
    return {
        SignatureAlg.RSA_SHA1_1024: generate_keypair("RSA", 1024),
        SignatureAlg.RSA_SHA1_2048: generate_keypair("RSA", 2048),
        SignatureAlg.DSA_SHA1_1024: generate_keypair("DSA", 1024),
    }


# -- symmetric ----------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(CipherAlg)), st.binary(max_size=100), st.integers(0, 2**32))
def test_library_matches_oracle_on_random_inputs(alg, pt, seed):
    rng = random.Random(seed)
    key, iv = gen_symmetric_key(alg, rng), gen_iv(alg, rng)
    suite = {CipherAlg.AES_128: "aes128", CipherAlg.AES_192: "aes192", CipherAlg.AES_256: "aes256",
             CipherAlg.DES_64: "des", CipherAlg.TDES_192: "tdes", CipherAlg.IDEA_128: "idea"}[alg]
    _, enc_block, _ = katlib.SUITES[suite]
    assert encrypt_cbc(alg, key, iv, pt) == cbc.encrypt(enc_block, key.octets, iv, pt, alg.block_size)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(CipherAlg)), st.binary(max_size=300), st.integers(0, 2**32))
def test_decrypt_inverts_encrypt_and_length_law(alg, pt, seed):
    rng = random.Random(seed)
    key, iv = gen_symmetric_key(alg, rng), gen_iv(alg, rng)
    ct = encrypt_cbc(alg, key, iv, pt)
    bs = alg.block_size
    assert len(ct) == (len(pt) // bs + 1) * bs
    assert decrypt_cbc(alg, key, iv, ct) == pt


@pytest.mark.parametrize("alg", list(CipherAlg))
def test_malformed_ciphertext_lengths(alg):
    key, iv = gen_symmetric_key(alg), gen_iv(alg)
    for bad in (b"", b"\x00" * (alg.block_size - 1), b"\x00" * (alg.block_size + 3)):
        with pytest.raises(MalformedCiphertext):
            decrypt_cbc(alg, key, iv, bad)


@pytest.mark.parametrize("alg", list(CipherAlg))
def test_wrong_key_mostly_fails_padding(alg):
    rng = random.Random(1)
    pt = b"location data" * 8
    failures = 0
    for _ in range(50):
        key, iv = gen_symmetric_key(alg, rng), gen_iv(alg, rng)
        ct = encrypt_cbc(alg, key, iv, pt)
        try:
            out = decrypt_cbc(alg, gen_symmetric_key(alg, rng), iv, ct)
        except DecryptionFailure:
            failures += 1
        else:
            assert out != pt
    # a random final block has valid padding with probability ~1/256 per try
    assert failures >= 40


def test_key_must_match_algorithm():
    key = gen_symmetric_key(CipherAlg.AES_128)
    with pytest.raises(InvalidKey):
        encrypt_cbc(CipherAlg.AES_256, key, bytes(16), b"x")
    with pytest.raises(InvalidKey):
        SymmetricKey(CipherAlg.AES_256, bytes(16))
    with pytest.raises(InvalidArgument):
        encrypt_cbc(CipherAlg.AES_128, key, bytes(8), b"x")


@pytest.mark.parametrize("alg", [CipherAlg.DES_64, CipherAlg.TDES_192])
def test_des_keys_have_odd_parity(alg):
    rng = random.Random(3)
    for _ in range(50):
        octets = gen_symmetric_key(alg, rng).octets
        assert all(bin(b).count("1") % 2 == 1 for b in octets)


@pytest.mark.parametrize("alg", list(CipherAlg))
def test_generated_keys_are_distinct(alg):
    keys = {gen_symmetric_key(alg).octets for _ in range(500)}
    assert len(keys) == 500
    ivs = {gen_iv(alg) for _ in range(500)}
    assert len(ivs) == 500


def test_seeded_generation_is_reproducible():
    a = gen_symmetric_key(CipherAlg.AES_256, random.Random(9))
    b = gen_symmetric_key(CipherAlg.AES_256, random.Random(9))
    assert a == b


# -- lookup -------------------------------------------------------------------

def test_algorithm_lookup():
    assert cipher_by_name("aes256") is CipherAlg.AES_256
    assert cipher_by_name("3des") is CipherAlg.TDES_192
    assert cipher_by_uri(CipherAlg.IDEA_128.uri) is CipherAlg.IDEA_128
    assert transport_by_name("rsa2048") is KeyTransportAlg.RSA15_2048
    assert signature_by_name("dsa-sha1-1024") is SignatureAlg.DSA_SHA1_1024


@pytest.mark.parametrize("name", ["idea256", "rc4", "blowfish"])
def test_unsupported_cipher_names(name):
    with pytest.raises(UnsupportedAlgorithm):
        cipher_by_name(name)


@pytest.mark.parametrize("name", ["dsa-sha1-2048", "rsa-md5-1024"])
def test_unsupported_signature_names(name):
    with pytest.raises(UnsupportedAlgorithm):
        signature_by_name(name)


def test_unsupported_keypair_sizes():
    with pytest.raises(UnsupportedAlgorithm):
        generate_keypair("DSA", 2048)
    with pytest.raises(UnsupportedAlgorithm):
        generate_keypair("RSA", 512)


# -- key transport ------------------------------------------------------------

@pytest.mark.parametrize("alg", list(CipherAlg))
@pytest.mark.parametrize("bits", [1024, 2048])
def test_wrap_unwrap_round_trip(keypairs, alg, bits):
    pair = keypairs[SignatureAlg.RSA_SHA1_1024 if bits == 1024 else SignatureAlg.RSA_SHA1_2048]
    key = gen_symmetric_key(alg)
    wrapped = wrap_key(pair.public_only(), key)
    assert len(wrapped) == bits // 8
    assert unwrap_key(pair, wrapped, alg) == key
    # the oracle opens the library's wrapping too
    n = pair.public.public_numbers().n
    d = pair.private.private_numbers().d
    assert orsa.decrypt(n, d, wrapped) == key.octets


def test_unwrap_with_wrong_key_fails_uniformly(keypairs):
    a = keypairs[SignatureAlg.RSA_SHA1_1024]
    b = generate_keypair("RSA", 1024)
    wrapped = wrap_key(a.public_only(), gen_symmetric_key(CipherAlg.AES_256))
    messages = set()
    for _ in range(20):
        with pytest.raises(KeyUnwrapFailure) as info:
            unwrap_key(b, wrapped, CipherAlg.AES_256)
        messages.add(str(info.value))
    assert len(messages) == 1


def test_unwrap_rejects_wrong_length_and_bad_octets(keypairs):
    pair = keypairs[SignatureAlg.RSA_SHA1_1024]
    wrapped = wrap_key(pair.public_only(), gen_symmetric_key(CipherAlg.AES_128))
    with pytest.raises(KeyUnwrapFailure):
        unwrap_key(pair, wrapped[:-1], CipherAlg.AES_128)
    with pytest.raises(KeyUnwrapFailure):
        unwrap_key(pair, wrapped, CipherAlg.AES_256)
    flipped = bytes([wrapped[0] ^ 1]) + wrapped[1:]
    with pytest.raises(KeyUnwrapFailure):
        unwrap_key(pair, flipped, CipherAlg.AES_128)


def test_wrap_needs_rsa(keypairs):
    with pytest.raises(InvalidKey):
        wrap_key(keypairs[SignatureAlg.DSA_SHA1_1024], gen_symmetric_key(CipherAlg.AES_128))


# -- signatures ---------------------------------------------------------------

@pytest.mark.parametrize("alg", list(SignatureAlg))
def test_sign_verify_round_trip(keypairs, alg):
    pair = keypairs[alg]
    msg = b"<ds:SignedInfo>...</ds:SignedInfo>"
    sig = sign(alg, pair, msg)
    assert verify(alg, pair.public_only(), msg, sig)
    assert not verify(alg, pair.public_only(), msg + b" ", sig)
    assert len(sig) == (40 if alg.kind == "DSA" else alg.bits // 8)


def test_rsa_signature_checked_by_oracle(keypairs):
    pair = keypairs[SignatureAlg.RSA_SHA1_2048]
    pub = pair.public.public_numbers()
    sig = sign(SignatureAlg.RSA_SHA1_2048, pair, b"payload")
    assert orsa.verify(pub.n, pub.e, b"payload", sig)


def test_dsa_signature_checked_by_oracle(keypairs):
    pair = keypairs[SignatureAlg.DSA_SHA1_1024]
    nums = pair.public.public_numbers()
    prm = nums.parameter_numbers
    for msg in (b"", b"abc", bytes(range(256))):
        sig = sign(SignatureAlg.DSA_SHA1_1024, pair, msg)
        r, s = int.from_bytes(sig[:20], "big"), int.from_bytes(sig[20:], "big")
        assert odsa.verify(prm.p, prm.q, prm.g, nums.y, msg, r, s)


@pytest.mark.parametrize("alg", list(SignatureAlg))
def test_every_single_bit_flip_of_a_signature_is_rejected(keypairs, alg):
    pair = keypairs[alg]
    msg = b"short message"
    sig = sign(alg, pair, msg)
    pub = pair.public_only()
    for i in range(len(sig) * 8):
        bad = bytearray(sig)
        bad[i // 8] ^= 1 << (i % 8)
        assert not verify(alg, pub, msg, bytes(bad))


def test_every_single_bit_flip_of_a_message_is_rejected(keypairs):
    alg = SignatureAlg.RSA_SHA1_1024
    pair = keypairs[alg]
    msg = b"0123456789abcdef"
    sig = sign(alg, pair, msg)
    for i in range(len(msg) * 8):
        bad = bytearray(msg)
        bad[i // 8] ^= 1 << (i % 8)
        assert not verify(alg, pair.public_only(), bytes(bad), sig)


def test_verify_never_raises_on_garbage(keypairs):
    for alg in SignatureAlg:
        pub = keypairs[alg].public_only()
        for junk in (b"", b"\x00", b"\xff" * 40, b"\x00" * (alg.bits // 8), b"\xff" * (alg.bits // 8)):
            assert verify(alg, pub, b"m", junk) is False


def test_signer_must_match_algorithm(keypairs):
    with pytest.raises(InvalidKey):
        sign(SignatureAlg.RSA_SHA1_2048, keypairs[SignatureAlg.RSA_SHA1_1024], b"m")
    with pytest.raises(InvalidKey):
        sign(SignatureAlg.RSA_SHA1_1024, keypairs[SignatureAlg.RSA_SHA1_1024].public_only(), b"m")
    assert not verify(SignatureAlg.DSA_SHA1_1024, keypairs[SignatureAlg.RSA_SHA1_1024], b"m", b"x" * 40)


def test_sha1_matches_oracle_on_random_lengths():
    from oracles.sha1 import sha1 as ref
    rng = random.Random(5)
    for n in list(range(0, 130)) + [1000, 4096]:
        m = rng.randbytes(n)
        assert crypto.sha1(m) == ref(m)
