"""IdP + Mobile Host + client wired together on loopback."""

from __future__ import annotations

import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .client import Client, fetch_peer_keys, provision_ring
from .crypto import SignatureAlg
from .envelope import DEFAULT_FIX, GpsFix
from .host import HostConfig, MobileHost
from .host import serve as serve_host
from .idp import KeyStore
from .idp import serve as serve_idp
from .keys import KeyRing
from .service import RunningService

HOST_OWNER = "host"
CLIENT_OWNER = "client"


@dataclass
class TopologyConfig:
    transport_bits: tuple[int, ...] = (1024, 2048)
    signatures: tuple[SignatureAlg, ...] = tuple(SignatureAlg)
    fix: GpsFix = DEFAULT_FIX
    seed: int | None = None
    store_path: str | Path | None = None
    host_log_path: str | Path | None = None
    pin_keys: bool = False
    benchmark_mode: bool = True


@dataclass
class LocalTopology:
    """Context manager that starts an IdP and a host and provisions both parties.

    Each party's key pairs are issued by the IdP; each then fetches the
    other's public keys from it, so no key material moves outside the IdP
    interface. With a ``seed`` the session keys, IVs and client/host RNGs
    are reproducible (RSA padding randomness is not, but sizes are).
    """

    config: TopologyConfig = field(default_factory=TopologyConfig)
    idp: RunningService | None = None
    host_service: RunningService | None = None
    host: MobileHost | None = None
    host_keys: KeyRing | None = None
    client_keys: KeyRing | None = None
    _tmp: tempfile.TemporaryDirectory | None = None

    def __enter__(self) -> LocalTopology:
        cfg = self.config
        try:
            store_path = cfg.store_path
            if store_path is None:
                self._tmp = tempfile.TemporaryDirectory(prefix="mwsbench-idp-")
                store_path = Path(self._tmp.name) / "keys.db"
            self.idp = serve_idp("127.0.0.1:0", KeyStore(store_path))
            provision = dict(transport_bits=cfg.transport_bits, signatures=cfg.signatures)
            self.host_keys = provision_ring(self.idp.url, HOST_OWNER, **provision)
            self.client_keys = provision_ring(self.idp.url, CLIENT_OWNER, **provision)
            fetch_peer_keys(self.idp.url, self.host_keys, CLIENT_OWNER)
            fetch_peer_keys(self.idp.url, self.client_keys, HOST_OWNER)
            host_rng = random.Random(cfg.seed + 1) if cfg.seed is not None else None
            self.host_service, self.host = serve_host(HostConfig(
                self.host_keys,
                fix_source=cfg.fix,
                pin_client_keys=cfg.pin_keys,
                benchmark_mode=cfg.benchmark_mode,
                log_path=cfg.host_log_path,
                rng=host_rng,
            ))
        except BaseException:
            self.close()
            raise
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        for svc in (self.host_service, self.idp):
            if svc is not None:
                svc.shutdown()
        self.host_service = self.idp = None
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    @property
    def endpoint(self) -> str:
        return self.host_service.url + "/"

    def client(self, random_ids: bool = False) -> Client:
        rng = random.Random(self.config.seed) if self.config.seed is not None else None
        return Client(self.client_keys, rng, random_ids, pin_host_keys=self.config.pin_keys)
