#include "ntkdfl/rng.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace ntkdfl {

double uniform01(Engine& eng) { return boost::random::uniform_01<double>{}(eng); }

double standard_normal(Engine& eng) {
  return boost::random::normal_distribution<double>{0.0, 1.0}(eng);
}

double gamma_sample(Engine& eng, double shape) {
  return boost::random::gamma_distribution<double>{shape, 1.0}(eng);
}

std::size_t uniform_index(Engine& eng, std::size_t n) {
  return boost::random::uniform_int_distribution<std::size_t>{0, n - 1}(eng);
}

}  // namespace ntkdfl
