#pragma once

namespace csmle::pred {

// Sign of the determinant of an n x n row-major matrix, n <= 5.
// Floating-point filter with an exact rational fallback.
int det_sign(const double* m, int n);

// Floating-point determinant value (no guarantee on sign).
double det_approx(const double* m, int n);

}  // namespace csmle::pred
