#pragma once

// Frozen expected values. Hand-computed or computed independently before the
// implementation existed; do not regenerate from the code under test.

namespace oracle {

// Two-dimensional counterexample, unit-length gradient directions.
inline constexpr double kInitialLoss = 7.0;
inline constexpr double kSingleB = 6.96;
inline constexpr double kSingleC = 6.98;
inline constexpr double kCombinedAB = 6.09;
inline constexpr double kCombinedAC = 6.07;
inline constexpr double kAltSingleC = 7.96;
inline constexpr double kAltCombinedAC = 6.98;
inline constexpr double kReferenceTolerance = 0.03;

// Same quantities recomputed in closed form at full precision.
inline constexpr double kSingleBExact = 6.962538;
inline constexpr double kSingleCExact = 6.975443;
inline constexpr double kCombinedABExact = 6.101535;
inline constexpr double kCombinedACExact = 6.085227;
inline constexpr double kExactTolerance = 5e-4;

inline constexpr double kCosAC = 0.03224;
inline constexpr double kCosACAlternate = -0.97788;

// Threshold at alpha = 1, beta = 10, eta = 0.09: (0.09/4)(10/9) - 1.
inline constexpr double kThresholdCounterexample = -0.975;

// Selector hand instance (n = 3, budget 2, train diagonal), source -> target:
//   Z(1->0) = 0.9, Z(0->1) = 0.8, Z(2->0) = -0.5, Z(2->1) = -0.4,
//   Z(0->2) = -0.6, Z(1->2) = -0.2.
// Enumerating every cover of at most two groups: {0,1} + {1,2} serving
// 0 and 1 from {0,1} and 2 from {1,2} scores 0.9 + 0.8 - 0.2.
inline constexpr double kHandTotal = 1.5;
inline constexpr double kHandDense[9] = {0.0, 0.8, -0.6,   // row = source 0
                                          0.9, 0.0, -0.2,   // source 1
                                          -0.5, -0.4, 0.0};  // source 2

// Scalar lookahead: L(t) = t^2 / 2, t = 1, source gradient 1, eta = 0.5.
inline constexpr double kScalarLookahead = 0.75;

}  // namespace oracle
