#pragma once

// Brute-force checks used by the tests. They share no code with the library's
// chain or certificate search.

#include <string>
#include <vector>

#include "cantor_forge/containment_rd.hpp"

namespace oracle {

using cantor::Box;
using cantor::Interval1;
using cantor::Rat;

/// Merged union of {a - b : a in A, b in B} for finite interval unions A and B.
std::vector<Interval1> minkowski_difference(const std::vector<Interval1>& A, const std::vector<Interval1>& B);

bool union_contains(const std::vector<Interval1>& U, const Rat& t);

/// Whether the level-n cover of `cert` (component boxes at certificate depth n) meets
/// the level-n cells of the product companion translated by t.
bool covers_meet(const cantor::UndCertificate& cert, const cantor::ProductCompanion& comp, int n,
                 const std::vector<Rat>& t);

/// Re-derives every separation and ratio bound of a certificate from its boxes.
/// Empty string when everything checks out.
std::string check_certificate(const cantor::UndCertificate& cert);

/// Smallest separation at each certificate depth after mapping the source boxes of
/// the selected components through x -> J x (exact interval arithmetic).
std::vector<Rat> mapped_separations(const cantor::UndCertificate& cert, const std::vector<std::vector<Rat>>& J);

} // namespace oracle
