#include "sgrpo/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "sgrpo/errors.hpp"
#include "sgrpo/rng.hpp"
#include "sgrpo/textmetrics.hpp"

namespace sgrpo::policy {
namespace {

constexpr char kMagic[] = "SGRPOPOLICY1\n";
constexpr double kInitStd = 0.3;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M x, with M stored row-major (rows x cols).
void matvec_add(std::span<const double> m, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = y.size(), cols = x.size();
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = m.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

// y += M^T x.
void matvec_t_add(std::span<const double> m, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = x.size(), cols = y.size();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m.data() + i * cols;
    const double xi = x[i];
    for (std::size_t j = 0; j < cols; ++j) y[j] += row[j] * xi;
  }
}

// M += outer(a, b).
void outer_add(std::span<double> m, std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    double* row = m.data() + i * b.size();
    const double ai = a[i];
    for (std::size_t j = 0; j < b.size(); ++j) row[j] += ai * b[j];
  }
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated policy stream");
  return v;
}

bool is_lower_alnum(const std::string& w) {
  if (w.empty()) return false;
  for (unsigned char c : w) {
    if (!(std::islower(c) || std::isdigit(c))) return false;
  }
  return true;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> forms, std::vector<TokenRole> roles)
    : forms_(std::move(forms)), roles_(std::move(roles)) {
  if (forms_.size() != roles_.size()) throw ConfigError("vocabulary forms/roles size mismatch");
  if (forms_.size() > 256) throw ConfigError("vocabulary larger than 256 tokens");
  static const std::vector<std::string> kSpecials = {"<bos>",    "<eos>",    "<think>",
                                                     "</think>", "<answer>", "</answer>"};
  if (forms_.size() < kSpecials.size()) throw ConfigError("vocabulary missing special tokens");
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (forms_[i] != kSpecials[i] || roles_[i] != TokenRole::Special) {
      throw ConfigError("special tokens must lead the vocabulary in standard order");
    }
  }
  for (std::size_t i = 0; i < forms_.size(); ++i) {
    if (forms_[i].empty()) throw ConfigError("empty token form");
    if (!index_.emplace(forms_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate token form '" + forms_[i] + "'");
    }
    if ((roles_[i] == TokenRole::Context || roles_[i] == TokenRole::ReasonWord) &&
        !is_lower_alnum(forms_[i])) {
      throw ConfigError("word token '" + forms_[i] + "' must be lowercase alphanumeric");
    }
  }
}

Vocabulary Vocabulary::standard(int n_letters, std::vector<std::string> reason_words,
                                std::vector<std::string> context_words) {
  if (n_letters < 1 || n_letters > 26) throw ConfigError("n_letters out of range");
  std::vector<std::string> forms = {"<bos>", "<eos>", "<think>", "</think>", "<answer>", "</answer>"};
  std::vector<TokenRole> roles(forms.size(), TokenRole::Special);
  for (int i = 0; i < n_letters; ++i) {
    forms.push_back(std::string(1, static_cast<char>('A' + i)));
    roles.push_back(TokenRole::Letter);
  }
  for (auto& w : reason_words) {
    forms.push_back(std::move(w));
    roles.push_back(TokenRole::ReasonWord);
  }
  for (auto& w : context_words) {
    forms.push_back(std::move(w));
    roles.push_back(TokenRole::Context);
  }
  return Vocabulary(std::move(forms), std::move(roles));
}

int Vocabulary::id_of(const std::string& form) const {
  auto it = index_.find(form);
  if (it == index_.end()) throw UnknownTokenError("unknown token '" + form + "'");
  return it->second;
}

std::optional<int> Vocabulary::find(const std::string& form) const {
  auto it = index_.find(form);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::letter_id(char letter) const { return id_of(std::string(1, letter)); }

std::string Vocabulary::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int id : tokens) {
    if (id < 0 || id >= size()) throw UnknownTokenError("token id out of range");
    if (id == bos_ || id == eos_) continue;
    if (!out.empty()) out.push_back(' ');
    out += forms_[id];
  }
  return out;
}

std::vector<int> Vocabulary::encode_prompt_text(const std::string& text) const {
  std::vector<int> out = {bos_};
  for (const auto& word : text::tokenize(text).tokens) {
    if (auto id = find(word); id && roles_[*id] == TokenRole::Context) out.push_back(*id);
  }
  return out;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return forms_ == other.forms_ && roles_ == other.roles_;
}

GatedRecurrentPolicy::Offsets GatedRecurrentPolicy::layout(int vocab_size, int dim) {
  Offsets off{};
  const std::size_t v = static_cast<std::size_t>(vocab_size);
  const std::size_t d = static_cast<std::size_t>(dim);
  off.embed = 0;
  off.w_z = off.embed + v * d;
  off.u_z = off.w_z + d * d;
  off.b_z = off.u_z + d * d;
  off.w_c = off.b_z + d;
  off.u_c = off.w_c + d * d;
  off.b_c = off.u_c + d * d;
  off.w_o = off.b_c + d;
  off.b_o = off.w_o + v * d;
  off.total = off.b_o + v;
  return off;
}

GatedRecurrentPolicy::GatedRecurrentPolicy(Vocabulary vocab, int embed_dim, std::uint64_t init_seed)
    : vocab_(std::move(vocab)), dim_(embed_dim), off_(layout(vocab_.size(), embed_dim)) {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  params_.assign(off_.total, 0.0);
  Rng rng(init_seed);
  // Embeddings and recurrence start random; the output head starts at zero so
  // the initial distribution is uniform at every step.
  for (std::size_t i = off_.embed; i < off_.w_o; ++i) params_[i] = rng.normal(0.0, kInitStd);
  const std::size_t d = static_cast<std::size_t>(dim_);
  std::fill(params_.begin() + off_.b_z, params_.begin() + off_.b_z + d, 0.0);
  std::fill(params_.begin() + off_.b_c, params_.begin() + off_.b_c + d, 0.0);
}

void GatedRecurrentPolicy::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw ConfigError("parameter vector size mismatch");
  params_.assign(values.begin(), values.end());
}

void GatedRecurrentPolicy::check_tokens(std::span<const int> tokens) const {
  for (int t : tokens) {
    if (t < 0 || t >= vocab_.size()) throw UnknownTokenError("token id out of range");
  }
}

void GatedRecurrentPolicy::step(std::span<const double> params, int token, std::vector<double>& h,
                                std::vector<double>* z_out, std::vector<double>* c_out) const {
  const std::size_t d = static_cast<std::size_t>(dim_);
  std::span<const double> x(params.data() + off_.embed + static_cast<std::size_t>(token) * d, d);
  std::vector<double> a_z(params.begin() + off_.b_z, params.begin() + off_.b_z + d);
  std::vector<double> a_c(params.begin() + off_.b_c, params.begin() + off_.b_c + d);
  matvec_add(params.subspan(off_.w_z, d * d), x, a_z);
  matvec_add(params.subspan(off_.u_z, d * d), h, a_z);
  matvec_add(params.subspan(off_.w_c, d * d), x, a_c);
  matvec_add(params.subspan(off_.u_c, d * d), h, a_c);
  for (std::size_t i = 0; i < d; ++i) {
    const double z = sigmoid(a_z[i]);
    const double c = std::tanh(a_c[i]);
    if (z_out != nullptr) (*z_out)[i] = z;
    if (c_out != nullptr) (*c_out)[i] = c;
    h[i] = (1.0 - z) * h[i] + z * c;
  }
}

std::vector<double> GatedRecurrentPolicy::token_logprobs(std::span<const double> params,
                                                         const std::vector<double>& h) const {
  const std::size_t v = static_cast<std::size_t>(vocab_.size());
  const std::size_t d = static_cast<std::size_t>(dim_);
  std::vector<double> logits(params.begin() + off_.b_o, params.begin() + off_.b_o + v);
  matvec_add(params.subspan(off_.w_o, v * d), h, logits);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - max_logit);
  const double lse = max_logit + std::log(sum);
  for (double& l : logits) l -= lse;
  return logits;
}

std::vector<double> GatedRecurrentPolicy::logprobs(std::span<const int> prompt,
                                                   std::span<const int> response) const {
  check_tokens(prompt);
  check_tokens(response);
  std::vector<double> h(dim_, 0.0);
  for (int t : prompt) step(params_, t, h, nullptr, nullptr);
  std::vector<double> out;
  out.reserve(response.size());
  for (std::size_t j = 0; j < response.size(); ++j) {
    out.push_back(token_logprobs(params_, h)[response[j]]);
    if (j + 1 < response.size()) step(params_, response[j], h, nullptr, nullptr);
  }
  return out;
}

void GatedRecurrentPolicy::accumulate_weighted_grad(std::span<const int> prompt,
                                                    std::span<const int> response,
                                                    std::span<const double> weights,
                                                    std::span<double> grad) const {
  if (weights.size() != response.size()) throw ConfigError("weights/response size mismatch");
  if (grad.size() != params_.size()) throw ConfigError("grad buffer size mismatch");
  if (response.empty()) return;
  check_tokens(prompt);
  check_tokens(response);

  const std::size_t d = static_cast<std::size_t>(dim_);
  const std::size_t v = static_cast<std::size_t>(vocab_.size());
  const std::size_t p_len = prompt.size();
  const std::size_t r_len = response.size();
  // Consuming the final response token cannot influence any observed
  // log-probability, so the recurrence runs for total - 1 steps.
  const std::size_t n_steps = p_len + r_len - 1;

  const auto consumed = [&](std::size_t t) -> int {
    return t < p_len ? prompt[t] : response[t - p_len];
  };

  // Forward, caching everything the reverse sweep needs.
  std::vector<std::vector<double>> h_before(n_steps + 1);  // h_before[t]: state entering step t
  std::vector<std::vector<double>> zs(n_steps), cs(n_steps);
  std::vector<std::vector<double>> probs(r_len);  // softmax at each observation
  std::vector<double> h(d, 0.0);
  const auto observe = [&](std::size_t j) {
    auto lp = token_logprobs(params_, h);
    auto& p = probs[j];
    p.resize(v);
    for (std::size_t k = 0; k < v; ++k) p[k] = std::exp(lp[k]);
  };
  if (p_len == 0) observe(0);
  for (std::size_t t = 0; t < n_steps; ++t) {
    h_before[t] = h;
    zs[t].resize(d);
    cs[t].resize(d);
    step(params_, consumed(t), h, &zs[t], &cs[t]);
    const std::size_t next = t + 1;  // index of the token predicted from h after step t
    if (next >= p_len) observe(next - p_len);
  }
  h_before[n_steps] = h;

  // Reverse sweep.
  std::span<const double> w_z = std::span(params_).subspan(off_.w_z, d * d);
  std::span<const double> u_z = std::span(params_).subspan(off_.u_z, d * d);
  std::span<const double> w_c = std::span(params_).subspan(off_.w_c, d * d);
  std::span<const double> u_c = std::span(params_).subspan(off_.u_c, d * d);
  std::span<const double> w_o = std::span(params_).subspan(off_.w_o, v * d);

  const auto observation_grad = [&](std::size_t j, const std::vector<double>& state,
                                    std::vector<double>& dh) {
    // d/dlogits of w * logp(y) is w * (onehot(y) - softmax).
    std::vector<double> dl(v);
    for (std::size_t k = 0; k < v; ++k) dl[k] = -weights[j] * probs[j][k];
    dl[static_cast<std::size_t>(response[j])] += weights[j];
    for (std::size_t k = 0; k < v; ++k) grad[off_.b_o + k] += dl[k];
    outer_add(grad.subspan(off_.w_o, v * d), dl, state);
    matvec_t_add(w_o, dl, dh);
  };

  std::vector<double> dh(d, 0.0);
  std::vector<double> da_z(d), da_c(d), dh_prev(d);
  for (std::size_t t = n_steps; t-- > 0;) {
    const std::size_t next = t + 1;
    if (next >= p_len) observation_grad(next - p_len, h_before[t + 1], dh);

    const std::vector<double>& h_prev = h_before[t];
    const std::vector<double>& z = zs[t];
    const std::vector<double>& c = cs[t];
    for (std::size_t i = 0; i < d; ++i) {
      const double dz = dh[i] * (c[i] - h_prev[i]);
      const double dc = dh[i] * z[i];
      da_z[i] = dz * z[i] * (1.0 - z[i]);
      da_c[i] = dc * (1.0 - c[i] * c[i]);
    }
    const int tok = consumed(t);
    std::span<const double> x(params_.data() + off_.embed + static_cast<std::size_t>(tok) * d, d);
    outer_add(grad.subspan(off_.w_z, d * d), da_z, x);
    outer_add(grad.subspan(off_.u_z, d * d), da_z, h_prev);
    outer_add(grad.subspan(off_.w_c, d * d), da_c, x);
    outer_add(grad.subspan(off_.u_c, d * d), da_c, h_prev);
    for (std::size_t i = 0; i < d; ++i) {
      grad[off_.b_z + i] += da_z[i];
      grad[off_.b_c + i] += da_c[i];
    }
    std::span<double> de(grad.data() + off_.embed + static_cast<std::size_t>(tok) * d, d);
    matvec_t_add(w_z, da_z, de);
    matvec_t_add(w_c, da_c, de);

    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) dh_prev[i] = dh[i] * (1.0 - z[i]);
    matvec_t_add(u_z, da_z, dh_prev);
    matvec_t_add(u_c, da_c, dh_prev);
    std::swap(dh, dh_prev);
  }
  if (p_len == 0) {
    // The first observation reads the all-zero initial state: only the output
    // bias receives gradient.
    std::vector<double> dl(v);
    for (std::size_t k = 0; k < v; ++k) dl[k] = -weights[0] * probs[0][k];
    dl[static_cast<std::size_t>(response[0])] += weights[0];
    for (std::size_t k = 0; k < v; ++k) grad[off_.b_o + k] += dl[k];
  }
}

SampleResult GatedRecurrentPolicy::sample(std::span<const int> prompt, int max_len,
                                          double temperature, std::uint64_t seed) const {
  check_tokens(prompt);
  SampleResult result;
  if (max_len <= 0) return result;
  Rng rng(seed);
  std::vector<double> h(dim_, 0.0);
  for (int t : prompt) step(params_, t, h, nullptr, nullptr);
  const std::size_t v = static_cast<std::size_t>(vocab_.size());
  while (static_cast<int>(result.tokens.size()) < max_len) {
    std::vector<double> lp = token_logprobs(params_, h);
    int chosen = 0;
    double chosen_lp = 0.0;
    if (temperature <= 0.0) {
      chosen = static_cast<int>(
          std::distance(lp.begin(), std::max_element(lp.begin(), lp.end())));
      chosen_lp = lp[chosen];  // untempered log-probability of the argmax
    } else {
      // At temperature 1 reuse the normalized log-probs unchanged, so the
      // recorded values reproduce logprobs() bit for bit.
      std::vector<double> tempered = lp;
      if (temperature != 1.0) {
        double max_t = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < v; ++k) {
          tempered[k] = lp[k] / temperature;
          max_t = std::max(max_t, tempered[k]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < v; ++k) sum += std::exp(tempered[k] - max_t);
        const double lse = max_t + std::log(sum);
        for (std::size_t k = 0; k < v; ++k) tempered[k] -= lse;
      }
      const double u = rng.uniform();
      double cum = 0.0;
      chosen = static_cast<int>(v) - 1;
      for (std::size_t k = 0; k < v; ++k) {
        cum += std::exp(tempered[k]);
        if (u < cum) {
          chosen = static_cast<int>(k);
          break;
        }
      }
      chosen_lp = tempered[chosen];
    }
    result.tokens.push_back(chosen);
    result.logp.push_back(chosen_lp);
    if (chosen == vocab_.eos()) break;
    step(params_, chosen, h, nullptr, nullptr);
  }
  return result;
}

std::unique_ptr<AutoregressivePolicy> GatedRecurrentPolicy::clone() const {
  return std::make_unique<GatedRecurrentPolicy>(*this);
}

void GatedRecurrentPolicy::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic) - 1);
  write_u32(out, static_cast<std::uint32_t>(vocab_.size()));
  for (int i = 0; i < vocab_.size(); ++i) {
    const std::string& form = vocab_.form(i);
    write_u32(out, static_cast<std::uint32_t>(form.size()));
    out.write(form.data(), static_cast<std::streamsize>(form.size()));
    const auto role = static_cast<std::uint8_t>(vocab_.role(i));
    out.write(reinterpret_cast<const char*>(&role), 1);
  }
  write_u32(out, static_cast<std::uint32_t>(dim_));
  write_u32(out, static_cast<std::uint32_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw IoError("failed to write policy checkpoint");
}

GatedRecurrentPolicy GatedRecurrentPolicy::load(std::istream& in) {
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("not a policy checkpoint (bad magic)");
  }
  const std::uint32_t vocab_size = read_u32(in);
  std::vector<std::string> forms;
  std::vector<TokenRole> roles;
  forms.reserve(vocab_size);
  roles.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    const std::uint32_t len = read_u32(in);
    std::string form(len, '\0');
    in.read(form.data(), len);
    std::uint8_t role = 0;
    in.read(reinterpret_cast<char*>(&role), 1);
    if (!in) throw IoError("truncated policy stream");
    forms.push_back(std::move(form));
    roles.push_back(static_cast<TokenRole>(role));
  }
  const std::uint32_t dim = read_u32(in);
  const std::uint32_t n_params = read_u32(in);
  GatedRecurrentPolicy policy(Vocabulary(std::move(forms), std::move(roles)),
                              static_cast<int>(dim), /*init_seed=*/0);
  if (policy.params_.size() != n_params) throw IoError("checkpoint parameter count mismatch");
  in.read(reinterpret_cast<char*>(policy.params_.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  if (!in) throw IoError("truncated policy stream");
  return policy;
}

std::unique_ptr<AutoregressivePolicy> load_policy(std::istream& in) {
  return std::make_unique<GatedRecurrentPolicy>(GatedRecurrentPolicy::load(in));
}

void save_policy_file(const AutoregressivePolicy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  policy.save(out);
}

std::unique_ptr<AutoregressivePolicy> load_policy_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_policy(in);
}

double grad_check(AutoregressivePolicy& policy, const ObjectiveFn& objective, int n_coords,
                  double fd_step, std::uint64_t seed) {
  const auto [value, analytic] = objective(policy);
  (void)value;
  const std::vector<double> original = policy.parameters();
  if (analytic.size() != original.size()) throw ConfigError("objective gradient size mismatch");

  std::vector<std::size_t> coords;
  if (n_coords <= 0 || static_cast<std::size_t>(n_coords) >= original.size()) {
    coords.resize(original.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  } else {
    Rng rng(seed);
    for (int i = 0; i < n_coords; ++i) coords.push_back(rng.uniform_int(original.size()));
  }

  double max_rel = 0.0;
  std::vector<double> perturbed = original;
  for (std::size_t idx : coords) {
    perturbed[idx] = original[idx] + fd_step;
    policy.set_parameters(perturbed);
    const double f_plus = objective(policy).first;
    perturbed[idx] = original[idx] - fd_step;
    policy.set_parameters(perturbed);
    const double f_minus = objective(policy).first;
    perturbed[idx] = original[idx];
    const double numeric = (f_plus - f_minus) / (2.0 * fd_step);
    // The denominator floor sits above the roundoff of the central difference
    // itself (~1e-12 * |f| / h), so near-zero components are compared
    // absolutely rather than drowned in quotient noise.
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-6});
    max_rel = std::max(max_rel, std::abs(analytic[idx] - numeric) / denom);
  }
  policy.set_parameters(original);
  return max_rel;
}

}  // namespace sgrpo::policy
