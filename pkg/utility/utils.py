import hashlib
from datetime import datetime, timezone

def current_utc_time():
    return datetime.now(timezone.utc)

def derive_seed(seed: int, *labels) -> int:
    """Named sub-seed: a stable 63-bit integer derived from a base seed and labels."""
    key = ":".join([str(int(seed))] + [str(label) for label in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
