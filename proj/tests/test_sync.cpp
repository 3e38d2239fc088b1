// Copyright 2026 The fdrive Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "fdrive/fdrive.hpp"
#include "oracles.hpp"

using namespace fdrive;

namespace {

Series ramp(std::size_t n, double omega, double phase = 0.0) {
  Series p(n);
  for (std::size_t t = 0; t < n; ++t) p[t] = phase + omega * static_cast<double>(t);
  return p;
}

Series scaled(const Series& p, double k, double add = 0.0) {
  Series out(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) out[t] = k * p[t] + add;
  return out;
}

const Series* find_phase(const AnalysisResult& a, const std::string& name) {
  for (const auto& p : a.part_tone_phases)
    if (p.name == name) return &p.psi;
  return nullptr;
}

Series fd_segment(const AnalysisResult& a) {
  return Series(a.fd.psi.begin() + static_cast<std::ptrdiff_t>(a.segment_begin),
                a.fd.psi.begin() + static_cast<std::ptrdiff_t>(a.segment_end));
}

const AnalysisResult& fig2() {
  static const AnalysisResult a = analyze(generate(preset("fig2")).signal, preset_config("fig2"));
  return a;
}

const AnalysisResult& m2() {
  static const AnalysisResult a = analyze(generate(preset("subharmonic-m2")).signal, preset_config("subharmonic-m2"));
  return a;
}

}  // namespace

TEST(CircleMap, IdenticalPhasesLieOnTheDiagonal) {
  const Series a = ramp(3000, 0.07, 0.4);
  const auto c = circle_map(a, a, 1.0, 1.0);
  ASSERT_EQ(c.x.size(), a.size());
  for (std::size_t t = 0; t < c.x.size(); ++t) {
    EXPECT_GE(c.x[t], 0.0);
    EXPECT_LT(c.x[t], oracle::kTwoPi);
    EXPECT_NEAR(c.y[t], c.x[t], 1e-9);
  }
  EXPECT_NEAR(c.slope, 1.0, 1e-12);
  EXPECT_LT(c.linearity_rms, 1e-9);
}

TEST(CircleMap, RationalRelationWithMatchingNorms) {
  const Series a = ramp(3000, 0.03, 0.2);
  const auto c = circle_map(a, scaled(a, 5.0), 1.0, 5.0);
  for (std::size_t t = 0; t < c.x.size(); ++t) EXPECT_NEAR(c.y[t], c.x[t], 1e-9);
  EXPECT_LT(c.linearity_rms, 1e-9);
}

TEST(CircleMap, WrapsBothCoordinatesTogether) {
  // y - x keeps the unwrapped difference at every sample
  const Series a = ramp(2000, 0.05), b = scaled(a, 1.0, 0.0);
  Series bj = b;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.2);
  for (auto& v : bj) v += nd(rng);
  const auto c = circle_map(a, bj, 1.0, 1.0);
  for (std::size_t t = 0; t < c.x.size(); ++t) EXPECT_NEAR(c.y[t] - c.x[t], bj[t] - a[t], 1e-9);
}

TEST(CircleMap, SkipsInvalidSamplesAndRejectsBadInput) {
  Series a = ramp(100, 0.1);
  a[10] = kNaN;
  EXPECT_EQ(circle_map(a, a, 1.0, 1.0).x.size(), 99u);
  EXPECT_THROW(circle_map(a, ramp(99, 0.1), 1.0, 1.0), DomainError);
  EXPECT_THROW(circle_map(a, a, 0.0, 1.0), DomainError);
}

TEST(WindingNumber, IdenticalAndIntegerMultiples) {
  const Series a = ramp(5000, 0.02);
  auto w = winding_number(a, a);
  ASSERT_TRUE(w.snapped);
  EXPECT_EQ(*w.snapped, Rational(1));
  w = winding_number(a, scaled(a, 7.5, 1.0));
  ASSERT_TRUE(w.snapped);
  EXPECT_EQ(*w.snapped, Rational(15, 2));
  EXPECT_NEAR(w.ratio, 7.5, 1e-12);
}

TEST(WindingNumber, AntisymmetricAfterSnapping) {
  const Series a = ramp(8000, 0.01);
  for (const Rational r : {Rational(3), Rational(3, 2), Rational(5, 2), Rational(1)}) {
    const Series b = scaled(a, r.value(), 0.3);
    const auto ab = winding_number(a, b, 20, 20), ba = winding_number(b, a, 20, 20);
    ASSERT_TRUE(ab.snapped && ba.snapped);
    EXPECT_EQ(*ab.snapped, r);
    EXPECT_EQ(*ba.snapped, Rational(r.den, r.num));
  }
}

TEST(WindingNumber, SnapToleranceShrinksWithDenominator) {
  EXPECT_EQ(*snap_rational(3.015, 20, 2), Rational(3));
  EXPECT_FALSE(snap_rational(3.03, 20, 1).has_value());
  EXPECT_EQ(*snap_rational(2.504, 20, 2), Rational(5, 2));
  EXPECT_FALSE(snap_rational(2.51, 20, 2).has_value());
  EXPECT_FALSE(snap_rational(std::numbers::sqrt2 * 3.0, 20, 2).has_value());
  EXPECT_FALSE(snap_rational(25.0, 20, 2).has_value());
}

TEST(WindingNumber, NeedsRotation) {
  const Series a = ramp(100, 0.1);  // under 2 cycles
  EXPECT_THROW(winding_number(a, a), DataError);
  const Series none(100, kNaN);
  EXPECT_THROW(winding_number(none, none), DataError);
}

TEST(LockingStrength, ExactLockIsOne) {
  const Series a = ramp(4000, 0.03, 0.5);
  EXPECT_NEAR(locking_strength(a, scaled(a, 1.5, 2.0), 3, 2), 1.0, 1e-12);
  EXPECT_NEAR(locking_strength(a, scaled(a, 4.0), 4, 1), 1.0, 1e-12);
}

TEST(LockingStrength, IndependentPhasesAreWeak) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, oracle::kTwoPi);
  Series a(10000), b(10000);
  for (std::size_t t = 0; t < a.size(); ++t) {
    a[t] = u(rng);
    b[t] = u(rng);
  }
  EXPECT_LE(locking_strength(a, b, 1, 1), 0.1);
  EXPECT_NEAR(locking_strength(a, b, 1, 1), oracle::resultant(a, b, 1, 1), 1e-12);
}

TEST(LockingStrength, GaussianJitterMatchesCharacteristicFunction) {
  const double sigma = 0.3;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, sigma);
  const Series a = ramp(20000, 0.04);
  Series b = scaled(a, 2.0);
  for (auto& v : b) v += nd(rng);
  EXPECT_NEAR(locking_strength(a, b, 2, 1), std::exp(-sigma * sigma / 2.0), 0.05);
}

TEST(Invariance, ConstantShiftsChangeNothingButIntercepts) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0.0, 0.2);
  const Series a = ramp(6000, 0.02);
  Series b = scaled(a, 3.0);
  for (auto& v : b) v += nd(rng);
  const auto w0 = winding_number(a, b);
  const double s0 = locking_strength(a, b, 3, 1);
  const auto c0 = circle_map(a, b, 1.0, 3.0);
  for (double shift : {0.7, -2.9, 40.0}) {
    const Series bs = scaled(b, 1.0, shift), as = scaled(a, 1.0, -shift);
    const auto w1 = winding_number(as, bs);
    EXPECT_EQ(*w1.snapped, *w0.snapped);
    EXPECT_NEAR(w1.ratio, w0.ratio, 1e-9);
    EXPECT_NEAR(locking_strength(as, bs, 3, 1), s0, 1e-9);
    const auto c1 = circle_map(as, bs, 1.0, 3.0);
    EXPECT_NEAR(c1.slope, c0.slope, 1e-9);
    EXPECT_NEAR(c1.linearity_rms, c0.linearity_rms, 1e-9);
  }
}

TEST(Invariance, PerPartToneDelayOffsetsLeaveConfirmationUnchanged) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd(0.0, 0.03);
  const Series fd = ramp(8000, 0.03);
  std::vector<NamedPhase> tones, shifted;
  for (int h = 1; h <= 5; ++h) {
    Series p = scaled(fd, h);
    for (auto& v : p) v += nd(rng);
    tones.push_back({"h" + std::to_string(h), p});
    // a group delay of d samples at velocity h omega is a constant offset
    shifted.push_back({tones.back().name, scaled(p, 1.0, -h * 0.03 * (10.0 + 3 * h))});
  }
  const auto a = confirm_equivalence(tones, fd), b = confirm_equivalence(shifted, fd);
  ASSERT_EQ(a.versus_fd.size(), b.versus_fd.size());
  EXPECT_EQ(a.confirmed_part_tones, 5u);
  EXPECT_EQ(a.confirmed_pairs, 10u);
  EXPECT_EQ(b.confirmed_pairs, a.confirmed_pairs);
  for (std::size_t i = 0; i < a.versus_fd.size(); ++i) {
    EXPECT_NEAR(a.versus_fd[i].strength, b.versus_fd[i].strength, 1e-9);
    EXPECT_EQ(*a.versus_fd[i].winding, *b.versus_fd[i].winding);
  }
}

TEST(ConfirmEquivalence, WhiteNoisePhasesConfirmNothing) {
  const Series fd = ramp(8000, 0.03);
  std::vector<NamedPhase> tones;
  for (std::uint64_t k = 0; k < 4; ++k) {
    // a random walk rotating at roughly a harmonic rate
    const auto n = oracle::white_noise(fd.size(), 100 + k);
    Series p(fd.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < p.size(); ++t) p[t] = acc += 0.03 * (k + 2) + 0.5 * n[t];
    tones.push_back({"n" + std::to_string(k), p});
  }
  const auto s = confirm_equivalence(tones, fd, 0.9);
  EXPECT_EQ(s.confirmed_part_tones, 0u);
  EXPECT_EQ(s.confirmed_pairs, 0u);
  for (const auto& r : s.versus_fd) EXPECT_LE(r.strength, 1.0);
}

TEST(Signal, HarmonicPartToneWindsFourTimesTheTruth) {
  const auto gt = generate(preset("fig2"));
  const auto& a = fig2();
  const Series* h4 = find_phase(a, "h4");
  ASSERT_NE(h4, nullptr);
  // first 20 cycles of the true phase inside the segment, past the filter transient
  std::size_t i0 = a.segment_begin;
  while (i0 < a.segment_end && !std::isfinite((*h4)[i0 - a.segment_begin])) ++i0;
  std::size_t i1 = i0;
  while (i1 < a.segment_end && gt.psi_prime[i1] - gt.psi_prime[i0] < 20 * oracle::kTwoPi) ++i1;
  ASSERT_LT(i1, a.segment_end);
  const Series truth(gt.psi_prime.begin() + static_cast<std::ptrdiff_t>(i0),
                     gt.psi_prime.begin() + static_cast<std::ptrdiff_t>(i1));
  const Series part(h4->begin() + static_cast<std::ptrdiff_t>(i0 - a.segment_begin),
                    h4->begin() + static_cast<std::ptrdiff_t>(i1 - a.segment_begin));
  const auto w = winding_number(truth, part);
  ASSERT_TRUE(w.snapped);
  EXPECT_EQ(*w.snapped, Rational(4));

  const auto v = winding_number(fd_segment(a), *h4);
  ASSERT_TRUE(v.snapped);
  EXPECT_EQ(*v.snapped, Rational(4));
}

TEST(Signal, CarrierCircleMapsAreStraight) {
  const auto& a = fig2();
  const Series fd = fd_segment(a);
  for (int h : {5, 6}) {
    const Series* p = find_phase(a, "h" + std::to_string(h));
    ASSERT_NE(p, nullptr);
    const auto c = circle_map(fd, *p, 1.0, h);
    EXPECT_LT(c.linearity_rms, 0.05) << "h" << h;
    EXPECT_NEAR(c.slope, 1.0, 0.01);
  }
}

TEST(Signal, NoiselessSignalConfirmsCarriers) {
  const auto& a = fig2();
  for (const auto& r : a.locking.versus_fd) {
    if (r.b == "h15") continue;  // slips against the drive, see the README
    EXPECT_TRUE(r.confirmed) << r.b;
    ASSERT_TRUE(r.winding);
    EXPECT_EQ("h" + r.winding->str(), r.b);
  }
  EXPECT_GT(a.locking.confirmed_pairs, 15u);
}

TEST(Signal, SubharmonicPartToneWindsFifteenHalves) {
  const auto gt = generate(preset("subharmonic-m2"));
  const auto& a = m2();
  EXPECT_EQ(a.fd.m, 2);
  const Series* p = find_phase(a, "h15/2");
  ASSERT_NE(p, nullptr);
  const Series truth(gt.psi_prime.begin() + static_cast<std::ptrdiff_t>(a.segment_begin),
                     gt.psi_prime.begin() + static_cast<std::ptrdiff_t>(a.segment_end));
  const auto w = winding_number(truth, *p);
  ASSERT_TRUE(w.snapped);
  EXPECT_EQ(*w.snapped, Rational(15, 2));
  // against the reconstructed drive the ratio carries its drift
  EXPECT_NEAR(winding_number(fd_segment(a), *p).ratio, 7.5, 0.0075);
}
