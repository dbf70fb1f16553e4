#pragma once

#include <functional>

#include "iwin/interleave.hpp"
#include "iwin/report.hpp"

namespace iwin::selfcheck {

// Machine-checkable invariant suites, each returning a CheckResult with
// pass/fail plus diagnostics. verify-all aggregates them; the acceptance
// binary reuses the ones that implement its criteria.

// scalar vs SIMD backends agree bit-for-bit on random sizes
CheckResult kernel_equivalence();

// restore(rearrange(x)) == x bit-exactly and the two permutation routes
// agree, for every (H, W) <= limit with every valid window
CheckResult interleave_bijectivity(std::int64_t limit = 16);

// same check with an injectable restore (mutation sanity in tests)
using RestoreFn = std::function<Tensor(const Tensor&, const WindowLayout&)>;
CheckResult interleave_bijectivity_with(const RestoreFn& restore_fn, std::int64_t limit = 8);

// the modular predicate equals actual window membership, exhaustively
CheckResult coset_law(std::int64_t limit = 16);

// every layout with K*M >= max(H,W) passes in lemma mode with the
// constructive witness certifying all pairs; the stated negative case fails
// with a concrete unreachable pair
CheckResult exchange_condition_sweep(std::int64_t limit = 16);

// finite-difference gradients for each layer and the S1/S2/S3 block
CheckResult gradient_checks();

// interleaved attention == coset-restricted attention semantics:
// single-window layouts equal dense global attention; both permutation
// routes bit-identical
CheckResult attention_equivalence();

// 1-D causal module: strict upper-triangular Jacobian is zero and
// perturbation support agrees
CheckResult causality_1d();

// analytic parameter/FLOPs totals against the published table
CheckResult cost_tables();

std::vector<CheckResult> run_all();

}  // namespace iwin::selfcheck
