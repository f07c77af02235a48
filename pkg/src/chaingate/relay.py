"""The relay: mutually-authenticated message handler, mediator and client calls.

One relay runs per chain. The server side accepts TLS 1.3 connections that
must present a client certificate signed by the host CA, then authenticates
every single request by looking the certificate's common name up in the
permitted-networks contract; a network removed on-chain is locked out from
its very next envelope. Authenticated requests dispatch to exactly three
operations: return the caller's own network record, list the caller's own
method grants, or invoke a granted method. Invocations are re-authorized
against the permitted-methods contract at call time and executed as ledger
submits, so every cross-chain call is recorded on the host chain.

The client side dials a remote relay with the credentials configured for
that network (client certificate issued by the remote's CA, plus the remote
CA certificate to verify the server). The server certificate's common name
must equal the dialed address.
"""

from __future__ import annotations

import json
import logging
import socket
import ssl
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from . import wire
from .connector import ChainConnector
from .errors import ChainError
from .pki import extract_common_name
from .policy import (
    ACCESSIBLE_CONTRACT,
    METHODS_CONTRACT,
    PERMITTED_CONTRACT,
    AccessibleNetwork,
    PermittedMethod,
    PermittedNetwork,
)

log = logging.getLogger(__name__)

SOCKET_TIMEOUT = 30.0


@dataclass(frozen=True)
class MethodRef:
    """Reference to one granted method on a remote chain."""

    permitted_method_id: str
    contract_name: str
    method_name: str


@dataclass(frozen=True)
class RemoteCredentials:
    client_cert_path: str
    client_key_path: str
    remote_ca_path: str


@dataclass
class RelayConfig:
    listen_address: str
    host_chain_ref: str
    server_cert_path: str
    server_key_path: str
    ca_cert_path: str
    remote_credentials: Dict[str, RemoteCredentials] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RelayConfig":
        path = Path(path)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ChainError("IO_ERROR", f"cannot read relay config: {exc}")
        except json.JSONDecodeError as exc:
            raise ChainError("INVALID_ARGUMENT", f"relay config is not valid JSON: {exc}")
        base = path.parent

        def resolve(p: str) -> str:
            return str((base / p).resolve()) if not Path(p).is_absolute() else p

        try:
            remotes = {
                addr: RemoteCredentials(
                    client_cert_path=resolve(creds["clientCertPath"]),
                    client_key_path=resolve(creds["clientKeyPath"]),
                    remote_ca_path=resolve(creds["remoteCaPath"]),
                )
                for addr, creds in record.get("remoteCredentials", {}).items()
            }
            return cls(
                listen_address=record["listenAddress"],
                host_chain_ref=resolve(record["hostChainRef"]),
                server_cert_path=resolve(record["serverCertPath"]),
                server_key_path=resolve(record["serverKeyPath"]),
                ca_cert_path=resolve(record["caCertPath"]),
                remote_credentials=remotes,
            )
        except (KeyError, TypeError) as exc:
            raise ChainError("INVALID_ARGUMENT", f"relay config is missing field: {exc}")

    def to_record(self) -> dict:
        return {
            "listenAddress": self.listen_address,
            "hostChainRef": self.host_chain_ref,
            "serverCertPath": self.server_cert_path,
            "serverKeyPath": self.server_key_path,
            "caCertPath": self.ca_cert_path,
            "remoteCredentials": {
                addr: {
                    "clientCertPath": creds.client_cert_path,
                    "clientKeyPath": creds.client_key_path,
                    "remoteCaPath": creds.remote_ca_path,
                }
                for addr, creds in self.remote_credentials.items()
            },
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def split_address(address: str) -> tuple:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ChainError("INVALID_ARGUMENT", f"address must be host:port, got {address!r}")
    return host, int(port)


def authenticate(peer_cert, backend: ChainConnector) -> PermittedNetwork:
    """Resolve a client certificate to the permitted network it was issued to.

    The certificate chain was already verified by the TLS layer; what remains
    is the on-chain check: the subject common name must be a registered
    permitted-network address.
    """
    try:
        cn = extract_common_name(peer_cert)
    except ChainError as exc:
        raise ChainError("UNAUTHENTICATED", f"client certificate unusable: {exc.message}")
    try:
        raw = backend.query(PERMITTED_CONTRACT, "GetByAddress", [cn])
    except ChainError as exc:
        if exc.code == "NOT_FOUND":
            raise ChainError("UNAUTHENTICATED", f"{cn!r} is not a permitted network")
        raise
    return PermittedNetwork.from_record(json.loads(raw))


class RelayServer:
    """Message-handler server: one listening socket, one thread per connection."""

    def __init__(self, config: RelayConfig, connector: ChainConnector):
        self.config = config
        self.connector = connector
        self._sock: Optional[socket.socket] = None
        self._tls: Optional[ssl.SSLContext] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._conns: set = set()
        self._conns_lock = threading.Lock()
        self._stopping = threading.Event()
        self.stats = {"handshake_failures": 0, "envelopes": 0}

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "RelayServer":
        try:
            tls = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            tls.minimum_version = ssl.TLSVersion.TLSv1_3
            tls.load_cert_chain(self.config.server_cert_path, self.config.server_key_path)
            tls.verify_mode = ssl.CERT_REQUIRED
            tls.load_verify_locations(cafile=self.config.ca_cert_path)
        except (OSError, ssl.SSLError, ValueError) as exc:
            raise ChainError("TLS_CONFIG_ERROR", f"cannot build server TLS context: {exc}")
        host, port = split_address(self.config.listen_address)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
            sock.listen(64)
        except OSError as exc:
            sock.close()
            raise ChainError("BIND_FAILURE", f"cannot listen on {self.config.listen_address}: {exc}")
        self._tls = tls
        self._sock = sock
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        log.info("relay serving on %s", self.config.listen_address)
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)

    def __enter__(self) -> "RelayServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    # -- connection handling ---------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                break
            threading.Thread(target=self._serve_connection, args=(conn, addr), daemon=True).start()

    def _serve_connection(self, conn: socket.socket, addr) -> None:
        try:
            conn.settimeout(SOCKET_TIMEOUT)
            tls = self._tls.wrap_socket(conn, server_side=True)
        except (ssl.SSLError, OSError) as exc:
            self.stats["handshake_failures"] += 1
            log.debug("handshake with %s failed: %s", addr, exc)
            try:
                conn.close()
            except OSError:
                pass
            return
        with self._conns_lock:
            self._conns.add(tls)
        try:
            peer_cert = tls.getpeercert(binary_form=True)
            self._envelope_loop(tls, peer_cert)
        except (OSError, wire.FrameError, ssl.SSLError) as exc:
            log.debug("connection from %s closed: %s", addr, exc)
        finally:
            with self._conns_lock:
                self._conns.discard(tls)
            try:
                tls.close()
            except OSError:
                pass

    def _envelope_loop(self, tls, peer_cert: bytes) -> None:
        while True:
            try:
                req = wire.read_envelope(tls)
            except wire.MalformedEnvelope as exc:
                failed = wire.WireEnvelope(v=wire.PROTOCOL_VERSION, id=exc.env_id, type="")
                wire.write_envelope(tls, wire.response_error(failed, "MALFORMED", exc.msg))
                continue
            if req is None:
                return
            self.stats["envelopes"] += 1
            wire.write_envelope(tls, self._respond(req, peer_cert))

    def _respond(self, req: wire.WireEnvelope, peer_cert: bytes) -> wire.WireEnvelope:
        if req.type not in wire.REQUEST_TYPES:
            return wire.response_error(req, "MALFORMED", f"unknown request type {req.type!r}")
        if not isinstance(req.body, dict):
            return wire.response_error(req, "MALFORMED", "request body must be an object")
        try:
            caller = authenticate(peer_cert, self.connector)
        except ChainError as exc:
            if exc.code == "UNAUTHENTICATED":
                return wire.response_error(req, "UNAUTHENTICATED", exc.message)
            log.error("authentication backend failure: %s", exc)
            return wire.response_error(req, "INTERNAL", "authentication backend failure")
        try:
            return wire.response_ok(req, self._dispatch(req, caller))
        except ChainError as exc:
            code = exc.code if exc.code in wire.WIRE_ERROR_CODES else "INTERNAL"
            return wire.response_error(req, code, exc.message)
        except Exception as exc:  # noqa: BLE001 - nothing may kill the connection thread
            log.exception("handler failure")
            return wire.response_error(req, "INTERNAL", str(exc))

    def _dispatch(self, req: wire.WireEnvelope, caller: PermittedNetwork) -> object:
        if req.type == wire.TYPE_NETWORK_INFO:
            return caller.to_record()
        if req.type == wire.TYPE_PERMITTED_METHODS:
            return self._permitted_methods(req.body, caller)
        return self._invoke(req.body, caller)

    def _permitted_methods(self, body: dict, caller: PermittedNetwork) -> object:
        network_id = body.get("networkId")
        if not isinstance(network_id, str):
            raise ChainError("MALFORMED", "networkId must be a string")
        if network_id != caller.id:
            raise ChainError("FORBIDDEN", "callers may only list their own grants")
        raw = self.connector.query(METHODS_CONTRACT, "GetPermittedMethodsByNetworkId", [network_id])
        return json.loads(raw)

    def _invoke(self, body: dict, caller: PermittedNetwork) -> object:
        contract = body.get("contractName")
        method = body.get("methodName")
        args = body.get("args")
        if (
            not isinstance(body.get("permittedMethodId"), str)
            or not isinstance(contract, str)
            or not isinstance(method, str)
            or not isinstance(args, list)
            or not all(isinstance(a, str) for a in args)
        ):
            raise ChainError("MALFORMED", "invoke body must carry permittedMethodId, contractName, methodName and string args")
        permitted = json.loads(
            self.connector.query(METHODS_CONTRACT, "CheckPermitted", [caller.id, contract, method])
        )
        if not permitted:
            raise ChainError("METHOD_NOT_PERMITTED", f"{contract}.{method} is not granted to {caller.id}")
        try:
            return self.connector.submit(contract, method, args)
        except ChainError as exc:
            raise ChainError("CONTRACT_ERROR", f"{exc.code}: {exc.message}")


class RelayClient:
    """Mutually-authenticated client connection to one remote relay.

    Safe to share across threads; requests are serialized on the connection
    and every in-flight request owns a distinct correlation id.
    """

    def __init__(self, address: str, credentials: RemoteCredentials, timeout: float = SOCKET_TIMEOUT):
        self.address = address
        self.credentials = credentials
        self.timeout = timeout
        self._sock: Optional[ssl.SSLSocket] = None
        self._lock = threading.Lock()
        self._next_id = 0
        self._got_first_response = False

    def connect(self) -> "RelayClient":
        try:
            tls = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
            tls.minimum_version = ssl.TLSVersion.TLSv1_3
            tls.check_hostname = False  # CNs are host:port endpoints, not DNS names
            tls.verify_mode = ssl.CERT_REQUIRED
            tls.load_verify_locations(cafile=self.credentials.remote_ca_path)
            tls.load_cert_chain(self.credentials.client_cert_path, self.credentials.client_key_path)
        except (OSError, ssl.SSLError, ValueError) as exc:
            raise ChainError("TLS_CONFIG_ERROR", f"cannot build client TLS context: {exc}")
        host, port = split_address(self.address)
        try:
            raw = socket.create_connection((host, port), timeout=self.timeout)
        except OSError as exc:
            raise ChainError("CONNECTION_LOST", f"cannot reach relay at {self.address}: {exc}")
        try:
            sock = tls.wrap_socket(raw, server_hostname=None)
        except ssl.SSLError as exc:
            raw.close()
            raise ChainError("TLS_REJECTED", f"TLS handshake with {self.address} failed: {exc}")
        except OSError as exc:
            raw.close()
            raise ChainError("CONNECTION_LOST", f"connection to {self.address} failed: {exc}")
        server_cn = extract_common_name(sock.getpeercert(binary_form=True))
        if server_cn != self.address:
            sock.close()
            raise ChainError(
                "UNTRUSTED_SERVER", f"server certificate CN {server_cn!r} does not match {self.address!r}"
            )
        self._sock = sock
        return self

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self) -> "RelayClient":
        if self._sock is None:
            self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def request(self, req_type: str, body: object) -> object:
        """Send one request and return the response body; raises on error responses."""
        if self._sock is None:
            self.connect()
        with self._lock:
            self._next_id += 1
            req = wire.request(self._next_id, req_type, body)
            try:
                wire.write_envelope(self._sock, req)
                resp = wire.read_envelope(self._sock)
            except socket.timeout:
                raise ChainError("CONNECTION_LOST", f"request to {self.address} timed out")
            except ssl.SSLError as exc:
                raise self._transport_failure(f"TLS failure talking to {self.address}: {exc}")
            except (OSError, wire.FrameError, wire.MalformedEnvelope) as exc:
                raise self._transport_failure(f"transport failure talking to {self.address}: {exc}")
            if resp is None:
                raise self._transport_failure(f"relay at {self.address} closed the connection")
            self._got_first_response = True
        if resp.id != req.id:
            raise ChainError("CONNECTION_LOST", f"correlation id mismatch: sent {req.id}, got {resp.id}")
        if resp.ok:
            return resp.body
        error = resp.error or {}
        raise ChainError(error.get("code", "INTERNAL"), error.get("msg", "remote error"))

    def _transport_failure(self, msg: str) -> ChainError:
        # a connection dying before its first response is a TLS-level
        # rejection (client certificate refused after the handshake races)
        code = "CONNECTION_LOST" if self._got_first_response else "TLS_REJECTED"
        self.close()
        return ChainError(code, msg)

    # typed operations

    def permitted_network_info(self) -> PermittedNetwork:
        body = self.request(wire.TYPE_NETWORK_INFO, {})
        return PermittedNetwork.from_record(body)

    def permitted_methods(self, network_id: str) -> List[PermittedMethod]:
        body = self.request(wire.TYPE_PERMITTED_METHODS, {"networkId": network_id})
        return [PermittedMethod.from_record(r) for r in body]

    def invoke(self, ref: MethodRef, args: Sequence[str]) -> str:
        body = self.request(
            wire.TYPE_INVOKE,
            {
                "permittedMethodId": ref.permitted_method_id,
                "contractName": ref.contract_name,
                "methodName": ref.method_name,
                "args": list(args),
            },
        )
        if not isinstance(body, str):
            raise ChainError("MALFORMED", "invoke response body must be a string")
        return body


class Relay:
    """One chain's relay: the served endpoint plus the client-side operations."""

    def __init__(self, config: RelayConfig, connector: ChainConnector):
        self.config = config
        self.connector = connector

    def serve(self) -> RelayServer:
        return RelayServer(self.config, self.connector).start()

    def get_accessible_network(self, relay_address: str) -> AccessibleNetwork:
        raw = self.connector.query(ACCESSIBLE_CONTRACT, "GetByAddress", [relay_address])
        return AccessibleNetwork.from_record(json.loads(raw))

    def credentials_for(self, relay_address: str) -> RemoteCredentials:
        creds = self.config.remote_credentials.get(relay_address)
        if creds is None:
            raise ChainError("CONFIG_ERROR", f"no client credentials configured for {relay_address!r}")
        return creds

    def open_remote(self, remote: Union[AccessibleNetwork, str]) -> RelayClient:
        address = remote.relay_address if isinstance(remote, AccessibleNetwork) else remote
        return RelayClient(address, self.credentials_for(address)).connect()

    def fetch_permitted_network_info(self, remote: Union[AccessibleNetwork, str]) -> PermittedNetwork:
        with self.open_remote(remote) as client:
            return client.permitted_network_info()

    def fetch_permitted_methods(self, remote: Union[AccessibleNetwork, str], network_id: str) -> List[PermittedMethod]:
        with self.open_remote(remote) as client:
            return client.permitted_methods(network_id)

    def invoke_remote(self, remote: Union[AccessibleNetwork, str], ref: MethodRef, args: Sequence[str]) -> str:
        with self.open_remote(remote) as client:
            return client.invoke(ref, args)
