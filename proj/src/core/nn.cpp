#include "deepinv/core/nn.hpp"

#include <cmath>

#include "deepinv/core/errors.hpp"

namespace deepinv {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(value), true}));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

Tensor init_normal(RandomSource& rng, Tensor::Shape shape, Real scale) {
  Tensor t = normal(rng, std::move(shape));
  for (auto& v : t.data()) v *= scale;
  return t;
}

Linear Linear::create(ParameterSet& set, const std::string& name, std::size_t in, std::size_t out,
                      RandomSource& rng, Real scale) {
  Linear l;
  l.weight = &set.add(name + ".weight", init_normal(rng, {in, out}, scale));
  l.bias = &set.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Linear Linear::zeros(ParameterSet& set, const std::string& name, std::size_t in, std::size_t out) {
  Linear l;
  l.weight = &set.add(name + ".weight", Tensor::zeros({in, out}));
  l.bias = &set.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return linear(x, tape.param(*weight), tape.param(*bias));
}

Tensor sinusoidal_embedding(std::span<const int> timesteps, std::size_t width) {
  if (width < 2 || width % 2 != 0) throw ContractError("sinusoidal width must be even and >= 2");
  const std::size_t half = width / 2;
  Tensor out({timesteps.size(), width});
  for (std::size_t r = 0; r < timesteps.size(); ++r) {
    const Real t = static_cast<Real>(timesteps[r]);
    for (std::size_t i = 0; i < half; ++i) {
      const Real freq = std::pow(10000.0, -static_cast<Real>(i) / static_cast<Real>(half));
      out.at(r, i) = std::sin(t * freq);
      out.at(r, half + i) = std::cos(t * freq);
    }
  }
  return out;
}

}  // namespace deepinv
