#include <cmath>
#include <random>

#include "doctest.h"
#include "nemo/error.hpp"
#include "nemo/geometry.hpp"

using namespace nemo;
using namespace nemo::geometry;

TEST_CASE("skew matches the cross product") {
  const Vec3 a(0.3, -1.2, 2.0), b(-0.7, 0.4, 1.1);
  CHECK((skew(a) * b - a.cross(b)).norm() < 1e-15);
  CHECK((skew(a) + skew(a).transpose()).norm() == 0.0);
}

TEST_CASE("vee_asym is the adjoint of skew") {
  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  Mat3 m;
  for (auto& x : m.reshaped()) x = n(rng);
  const Vec3 u(n(rng), n(rng), n(rng));
  CHECK(std::abs((m.array() * skew(u).array()).sum() - u.dot(vee_asym(m))) < 1e-12);
}

TEST_CASE("exponential map") {
  CHECK((so3_exp(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
  // Rotation by pi/2 about z.
  const Mat3 rz = so3_exp(Vec3(0, 0, M_PI / 2));
  CHECK((rz - rot_z(M_PI / 2)).norm() < 1e-15);
  CHECK((rz * Vec3::UnitX() - Vec3::UnitY()).norm() < 1e-15);

  const Vec3 w(0.4, -0.9, 1.3);
  const Mat3 r = so3_exp(w);
  CHECK(orthonormality_error(r) < 1e-14);
  CHECK(std::abs(r.determinant() - 1.0) < 1e-14);
  CHECK((r * w - w).norm() < 1e-14);  // the axis is fixed

  // Tiny angles use the series branch; compare against a truncated series.
  const Vec3 small(1e-9, -2e-9, 3e-9);
  const Mat3 series = Mat3::Identity() + skew(small) + 0.5 * skew(small) * skew(small);
  CHECK((so3_exp(small) - series).norm() < 1e-20);
}

TEST_CASE("right Jacobian matches finite differences of exp") {
  for (const Vec3& w : {Vec3(0.3, -0.2, 0.5), Vec3(1e-7, 2e-7, -1e-7), Vec3(2.0, 1.0, -0.5)}) {
    const Mat3 jr = so3_right_jacobian(w);
    const Mat3 e = so3_exp(w);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      const Vec3 d = Vec3::Unit(i) * h;
      const Mat3 diff = e.transpose() * (so3_exp(w + d) - so3_exp(w - d)) / (2 * h);
      const Vec3 col = 0.5 * vee_asym(diff);
      CHECK((col - jr.col(i)).norm() < 1e-8);
    }
  }
}

TEST_CASE("reorthonormalize") {
  const Mat3 r = so3_exp(Vec3(0.2, 0.3, -0.1));
  Mat3 noisy = r;
  noisy(0, 1) += 1e-4;
  noisy(2, 2) -= 2e-4;
  const Mat3 fixed = reorthonormalize(noisy);
  CHECK(orthonormality_error(fixed) < 1e-14);
  CHECK((fixed - r).norm() < 5e-4);
  CHECK((reorthonormalize(r) - r).norm() < 1e-14);

  Mat3 collapsed = r;
  collapsed.col(1).setZero();
  CHECK_THROWS_AS(reorthonormalize(collapsed), DegenerateRotation);
  Mat3 reflected = r;
  reflected.col(2) *= -1.0;
  CHECK_THROWS_AS(reorthonormalize(reflected), DegenerateRotation);
}

TEST_CASE("elementary rotations") {
  CHECK((rot_x(0.3) - so3_exp(Vec3(0.3, 0, 0))).norm() < 1e-15);
  CHECK((rot_y(-0.7) - so3_exp(Vec3(0, -0.7, 0))).norm() < 1e-15);
  CHECK((rot_z(1.1) * rot_z(-1.1) - Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("skew special cases") {
  CHECK(skew(Vec3::Zero()).isZero(0.0));
  CHECK(skew(Vec3::UnitZ()) * Vec3::UnitX() == Vec3::UnitY());
  const Mat3 s = skew(Vec3(0.3, -1.2, 2.0));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(s(j, i) == -s(i, j));
  }
}

TEST_CASE("exp of w and -w are inverse") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 w(u(rng), u(rng), u(rng));
    CHECK((so3_exp(w) * so3_exp(-w) - Mat3::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("projection of a slightly perturbed rotation") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1e-6, 1e-6);
  Mat3 r = so3_exp(Vec3(0.5, -0.2, 1.0));
  for (auto& x : r.reshaped()) x += u(rng);
  const Mat3 fixed = reorthonormalize(r);
  CHECK((fixed.transpose() * fixed - Mat3::Identity()).norm() < 1e-12);
  CHECK(std::abs(fixed.determinant() - 1.0) < 1e-12);
  CHECK(reorthonormalize(Mat3::Identity()) == Mat3::Identity());
  // Column swap gives det = -1, which is refused rather than silently flipped.
  Mat3 swapped = Mat3::Identity();
  swapped.col(0).swap(swapped.col(1));
  CHECK_THROWS_AS(reorthonormalize(swapped), DegenerateRotation);
}
