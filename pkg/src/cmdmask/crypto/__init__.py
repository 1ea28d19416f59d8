"""Property-preserving masking schemes and array masking."""
from .det import det_decrypt, det_encrypt
from .keys import MaskKeySet, derive_keys, new_salt
from .mask import (CLEAR_POLICY, MaskedArray, MaskPolicy, Scheme, dumps_masked, loads_masked,
                   mask_array, masked_combine, masked_multiply, masked_select, masked_threshold,
                   masked_transpose, mask_spec, str_mask, unmask_array)
from .ope import ope_decrypt, ope_encrypt
from .paillier import hom_add, hom_decrypt, hom_encrypt
from .rnd import rnd_decrypt, rnd_encrypt

__all__ = [
    "CLEAR_POLICY", "MaskKeySet", "MaskPolicy", "MaskedArray", "Scheme",
    "derive_keys", "det_decrypt", "det_encrypt", "dumps_masked", "hom_add", "hom_decrypt",
    "hom_encrypt", "loads_masked", "mask_array", "mask_spec", "masked_combine",
    "masked_multiply", "masked_select", "masked_threshold", "masked_transpose", "new_salt",
    "ope_decrypt", "ope_encrypt", "rnd_decrypt", "rnd_encrypt", "str_mask", "unmask_array",
]
