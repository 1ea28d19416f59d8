"""Computing on masked data: associative arrays, property-preserving masks,
and analytics that run directly on masked arrays."""
