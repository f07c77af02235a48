"""Per-host certificate authority and leaf certificate tooling.

Each chain admin runs their own CA. The CA issues the host relay's server
certificate and the client certificates handed to remote networks that were
granted access. The subject common name of every leaf is the relay endpoint
("host:port") it identifies; on the server side that CN is the key looked up
in the permitted-networks contract, so authorization lives on-chain and
revocation is an on-chain removal, not a CRL.

Keys are ECDSA P-256; default validity is 365 days. PEM files on disk:
``ca.crt``/``ca.key`` for the authority, ``<cn>.crt``/``<cn>.key`` for leaves
with ":" and "/" in the CN replaced by "_".
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID

from .errors import ChainError

DEFAULT_VALIDITY_DAYS = 365
# X.509 ub-common-name; cryptography enforces the same bound
MAX_CN_LENGTH = 64

CertLike = Union[x509.Certificate, bytes]


@dataclass(frozen=True)
class CertificateIdentity:
    common_name: str
    role: str
    not_before: datetime.datetime
    not_after: datetime.datetime
    issuer_id: str


@dataclass
class CertAuthority:
    name: str
    cert: x509.Certificate
    key: ec.EllipticCurvePrivateKey
    cert_path: Optional[Path] = None
    key_path: Optional[Path] = None


@dataclass
class IssuedCert:
    common_name: str
    role: str
    cert: x509.Certificate
    key: ec.EllipticCurvePrivateKey
    cert_path: Optional[Path] = None
    key_path: Optional[Path] = None

    @property
    def cert_pem(self) -> bytes:
        return self.cert.public_bytes(serialization.Encoding.PEM)

    @property
    def key_pem(self) -> bytes:
        return _key_pem(self.key)


def sanitize_cn(common_name: str) -> str:
    return common_name.replace(":", "_").replace("/", "_")


def _key_pem(key: ec.EllipticCurvePrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def _now() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc)


def _write_pair(directory, stem: str, cert: x509.Certificate, key) -> tuple:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        cert_path = directory / f"{stem}.crt"
        key_path = directory / f"{stem}.key"
        cert_path.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
        key_path.write_bytes(_key_pem(key))
    except OSError as exc:
        raise ChainError("IO_ERROR", f"cannot write certificate material: {exc}")
    return cert_path, key_path


def create_ca(name: str, output_dir=None, validity_days: int = DEFAULT_VALIDITY_DAYS) -> CertAuthority:
    """Create a self-signed CA; persist ca.crt/ca.key when output_dir is given."""
    if not name:
        raise ChainError("INVALID_CN", "CA name must be nonempty")
    key = ec.generate_private_key(ec.SECP256R1())
    subject = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, name)])
    now = _now()
    cert = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(minutes=5))
        .not_valid_after(now + datetime.timedelta(days=validity_days))
        .add_extension(x509.BasicConstraints(ca=True, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=True,
                crl_sign=True,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(key.public_key()), critical=False)
        .sign(key, hashes.SHA256())
    )
    ca = CertAuthority(name=name, cert=cert, key=key)
    if output_dir is not None:
        ca.cert_path, ca.key_path = _write_pair(output_dir, "ca", cert, key)
    return ca


def load_ca(directory) -> CertAuthority:
    directory = Path(directory)
    cert_path = directory / "ca.crt"
    key_path = directory / "ca.key"
    try:
        cert = x509.load_pem_x509_certificate(cert_path.read_bytes())
        key = serialization.load_pem_private_key(key_path.read_bytes(), password=None)
    except OSError as exc:
        raise ChainError("IO_ERROR", f"cannot load CA from {directory}: {exc}")
    except ValueError as exc:
        raise ChainError("MALFORMED_CERT", f"cannot parse CA material: {exc}")
    return CertAuthority(
        name=extract_common_name(cert), cert=cert, key=key, cert_path=cert_path, key_path=key_path
    )


def issue_cert(
    ca: CertAuthority,
    common_name: str,
    role: str,
    output_dir=None,
    validity_days: int = DEFAULT_VALIDITY_DAYS,
) -> IssuedCert:
    """Issue a leaf certificate with subject CN = common_name, signed by ``ca``."""
    if not common_name:
        raise ChainError("INVALID_CN", "common name must be nonempty")
    if len(common_name) > MAX_CN_LENGTH:
        raise ChainError("INVALID_CN", f"common name exceeds {MAX_CN_LENGTH} characters")
    if role not in ("server", "client"):
        raise ChainError("INVALID_ARGUMENT", f"role must be server or client, got {role!r}")
    key = ec.generate_private_key(ec.SECP256R1())
    now = _now()
    eku = ExtendedKeyUsageOID.SERVER_AUTH if role == "server" else ExtendedKeyUsageOID.CLIENT_AUTH
    try:
        subject = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    except ValueError as exc:
        raise ChainError("INVALID_CN", str(exc))
    cert = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(ca.cert.subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(minutes=5))
        .not_valid_after(now + datetime.timedelta(days=validity_days))
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=False,
                crl_sign=False,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(x509.ExtendedKeyUsage([eku]), critical=False)
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(key.public_key()), critical=False)
        .add_extension(
            x509.AuthorityKeyIdentifier.from_issuer_public_key(ca.cert.public_key()), critical=False
        )
        .sign(ca.key, hashes.SHA256())
    )
    issued = IssuedCert(common_name=common_name, role=role, cert=cert, key=key)
    if output_dir is not None:
        issued.cert_path, issued.key_path = _write_pair(output_dir, sanitize_cn(common_name), cert, key)
    return issued


def load_certificate(cert: CertLike) -> x509.Certificate:
    if isinstance(cert, x509.Certificate):
        return cert
    try:
        if cert.lstrip().startswith(b"-----BEGIN"):
            return x509.load_pem_x509_certificate(cert)
        return x509.load_der_x509_certificate(cert)
    except (ValueError, AttributeError) as exc:
        raise ChainError("MALFORMED_CERT", f"cannot parse certificate: {exc}")


def extract_common_name(cert: CertLike) -> str:
    """Subject CN of a certificate; the identity key checked against the chain."""
    parsed = load_certificate(cert)
    attrs = parsed.subject.get_attributes_for_oid(NameOID.COMMON_NAME)
    if not attrs:
        raise ChainError("NO_COMMON_NAME", "certificate subject has no common name")
    return attrs[0].value


def verify_chain(cert: CertLike, trust_root: CertLike, at: Optional[datetime.datetime] = None) -> bool:
    """True iff ``cert`` was signed by ``trust_root`` and ``at`` is inside its validity."""
    leaf = load_certificate(cert)
    root = load_certificate(trust_root)
    at = at or _now()
    if at.tzinfo is None:
        at = at.replace(tzinfo=datetime.timezone.utc)
    if not (leaf.not_valid_before_utc <= at <= leaf.not_valid_after_utc):
        return False
    if leaf.issuer != root.subject:
        return False
    try:
        leaf.verify_directly_issued_by(root)
    except Exception:
        return False
    return True


def certificate_identity(cert: CertLike) -> CertificateIdentity:
    parsed = load_certificate(cert)
    ekus = []
    try:
        ekus = list(parsed.extensions.get_extension_for_class(x509.ExtendedKeyUsage).value)
    except x509.ExtensionNotFound:
        pass
    if ExtendedKeyUsageOID.SERVER_AUTH in ekus:
        role = "server"
    elif ExtendedKeyUsageOID.CLIENT_AUTH in ekus:
        role = "client"
    else:
        role = "unknown"
    issuer_attrs = parsed.issuer.get_attributes_for_oid(NameOID.COMMON_NAME)
    return CertificateIdentity(
        common_name=extract_common_name(parsed),
        role=role,
        not_before=parsed.not_valid_before_utc,
        not_after=parsed.not_valid_after_utc,
        issuer_id=issuer_attrs[0].value if issuer_attrs else "",
    )
