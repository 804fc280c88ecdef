"""Oblivious selective disclosure for hash-committed verifiable credentials.

A holder presents a credential without revealing which of its claims the
verifier reads: every claim opening is encrypted under a key that the
verifier can only obtain through an OPRF evaluated by the holder, up to a
quota of evaluations.
"""

from .credential import (
    CredentialData,
    Reason,
    VerifiableCredential,
    Verdict,
    issue,
    verify_credential,
    verify_opening,
)
from .crypto_core import (
    aead_open,
    aead_seal,
    blind,
    commit,
    derive_key_direct,
    evaluate,
    finalize,
    hash_to_group,
)
from .disclosure import (
    DisclosedClaim,
    LocalChannel,
    holder_evaluate,
    holder_open_session,
    verifier_disclose_adaptive,
    verifier_disclose_batch,
)
from .errors import *  # noqa: F401,F403
from .group import SECP256K1, TOY
from .identity import KeyDirectory, PartyKey
from .presentation import (
    PresentationData,
    PresentationSecret,
    VerifiablePresentation,
    create_presentation,
    validate_presentation,
)

__version__ = "0.1.0"
