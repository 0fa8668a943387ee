import hashlib

import numpy as np

SEED_BYTES = 8


def derive_seed(global_seed, centre_id, epoch):
    """Derive an independent, reproducible seed for one centre and one local epoch"""
    token = f"{int(global_seed)}:{int(centre_id)}:{int(epoch)}".encode()
    digest = hashlib.sha256(token).digest()
    return int.from_bytes(digest[:SEED_BYTES], 'little')


def fingerprint_array(values):
    """Hash an array's dtype, shape and bytes for provenance checks"""
    array = np.ascontiguousarray(values)
    digest = hashlib.sha256()
    digest.update(str(array.dtype).encode())
    digest.update(str(array.shape).encode())
    digest.update(array.tobytes())
    return digest.hexdigest()[:16]
