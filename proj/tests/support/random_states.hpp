#pragma once

#include <random>

#include "tetherkit/dynamics.hpp"
#include "tetherkit/manifold.hpp"

namespace tktest {

using tetherkit::Vec2;
using tetherkit::Vec3;
using tetherkit::Vec4;
using tetherkit::manifold::BundlePoint;
using tetherkit::manifold::SpherePoint;

class Sampler {
 public:
  explicit Sampler(unsigned seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  Vec3 vec3(double scale = 1.0) { return scale * Vec3(normal(), normal(), normal()); }
  Vec2 vec2(double scale = 1.0) { return scale * Vec2(normal(), normal()); }
  Vec4 vec4(double scale = 1.0) { return scale * Vec4(normal(), normal(), normal(), normal()); }

  SpherePoint sphere() { return SpherePoint::normalized(vec3()); }
  BundlePoint bundle(double rate = 1.0) { return BundlePoint::projected(vec3(), vec3(rate)); }

  // Cable pointing downward (NED +e3) within a cone, so the system stays well posed.
  SpherePoint hanging(double spread = 0.4) {
    return SpherePoint::normalized(tetherkit::kE3 + vec3(spread));
  }

  tetherkit::dynamics::PlantState plant(double rate = 0.5) {
    tetherkit::dynamics::PlantState s;
    s.p0 = vec3();
    s.v0 = vec3(rate);
    s.payload = BundlePoint::projected(tetherkit::kE1 + vec3(0.3), vec3(rate));
    s.cable1 = BundlePoint::projected(hanging().vec(), vec3(rate));
    s.cable2 = BundlePoint::projected(hanging().vec(), vec3(rate));
    return s;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tktest
