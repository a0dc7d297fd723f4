"""Exception hierarchy shared by every layer of the toolkit."""


class MwsError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(MwsError, ValueError):
    pass


class SerializationError(MwsError):
    pass


class ParseError(MwsError):
    """Octets are not well-formed XML."""


class ProtocolError(MwsError):
    """Well-formed XML that is not a SOAP envelope (or not the expected payload)."""


class UnsupportedAlgorithm(MwsError):
    pass


class InvalidKey(MwsError):
    pass


class MalformedCiphertext(MwsError):
    pass


class DecryptionFailure(MwsError):
    pass


class KeyUnwrapFailure(DecryptionFailure):
    # deliberately carries no detail about why unwrapping failed
    def __init__(self):
        super().__init__("key unwrap failed")


class ScopeError(MwsError):
    pass


class DataReferenceError(MwsError):
    pass


class MalformedPlaintext(MwsError):
    pass


class NoSignature(MwsError):
    pass


class MalformedSignature(MwsError):
    pass


class NotFound(MwsError, LookupError):
    pass


class NetworkError(MwsError):
    pass


class RemoteFault(MwsError):
    def __init__(self, faultcode, faultstring):
        super().__init__(f"{faultcode}: {faultstring}")
        self.faultcode = faultcode
        self.faultstring = faultstring


class SecurityError(MwsError):
    pass


class StartupError(MwsError):
    pass
