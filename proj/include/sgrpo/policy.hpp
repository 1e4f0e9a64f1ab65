#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sgrpo::policy {

enum class TokenRole : std::uint8_t {
  Special = 0,     // structural markers (BOS, EOS, span tags)
  Letter = 1,      // answer option letters
  ReasonWord = 2,  // words available for think-span text
  Context = 3,     // prompt feature words
};

// A fixed ordered token inventory. Token ids are indices into `forms`.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> forms, std::vector<TokenRole> roles);

  // Layout: [bos, eos, <think>, </think>, <answer>, </answer>, letters...,
  // reason words..., context words...].
  static Vocabulary standard(int n_letters, std::vector<std::string> reason_words,
                             std::vector<std::string> context_words);

  int size() const { return static_cast<int>(forms_.size()); }
  const std::string& form(int id) const { return forms_[id]; }
  TokenRole role(int id) const { return roles_[id]; }
  int id_of(const std::string& form) const;  // throws UnknownTokenError
  std::optional<int> find(const std::string& form) const;

  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int think_open() const { return think_open_; }
  int think_close() const { return think_close_; }
  int answer_open() const { return answer_open_; }
  int answer_close() const { return answer_close_; }
  int letter_id(char letter) const;  // 'A' -> first letter token

  // Tokens joined by single spaces, skipping BOS/EOS.
  std::string detokenize(std::span<const int> tokens) const;

  // Lowercased words of `text` that name Context tokens, in order, with BOS
  // prepended. Everything else in the text is ignored.
  std::vector<int> encode_prompt_text(const std::string& text) const;

  bool operator==(const Vocabulary& other) const;

 private:
  std::vector<std::string> forms_;
  std::vector<TokenRole> roles_;
  std::unordered_map<std::string, int> index_;
  int bos_ = 0, eos_ = 1;
  int think_open_ = 2, think_close_ = 3, answer_open_ = 4, answer_close_ = 5;
};

struct SampleResult {
  std::vector<int> tokens;
  std::vector<double> logp;  // sampling-time log-probabilities, one per token
};

// An autoregressive token policy with exact log-probabilities and exact
// parameter gradients. Evaluation methods are const and safe to call
// concurrently; set_parameters requires exclusive access.
class AutoregressivePolicy {
 public:
  virtual ~AutoregressivePolicy() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> values) = 0;

  // log pi(response_t | prompt, response_<t) for every response position.
  virtual std::vector<double> logprobs(std::span<const int> prompt,
                                       std::span<const int> response) const = 0;

  // Adds d/dtheta of sum_t weights[t] * log pi(response_t | ...) into `grad`
  // (length parameter_count). The exact adjoint of logprobs.
  virtual void accumulate_weighted_grad(std::span<const int> prompt, std::span<const int> response,
                                        std::span<const double> weights,
                                        std::span<double> grad) const = 0;

  // Autoregressive sampling, stopping after EOS or max_len tokens.
  // temperature <= 0 selects argmax decoding. Deterministic given seed.
  virtual SampleResult sample(std::span<const int> prompt, int max_len, double temperature,
                              std::uint64_t seed) const = 0;

  virtual std::unique_ptr<AutoregressivePolicy> clone() const = 0;
  virtual void save(std::ostream& out) const = 0;

  std::vector<int> greedy_decode(std::span<const int> prompt, int max_len) const {
    return sample(prompt, max_len, 0.0, 0).tokens;
  }
};

// Reference implementation: token embedding -> single gated recurrence ->
// affine softmax head. The output head starts at zero, so a freshly
// initialized policy is uniform over the vocabulary at every step.
class GatedRecurrentPolicy final : public AutoregressivePolicy {
 public:
  GatedRecurrentPolicy(Vocabulary vocab, int embed_dim, std::uint64_t init_seed);

  const Vocabulary& vocab() const override { return vocab_; }
  int embed_dim() const { return dim_; }
  std::size_t parameter_count() const override { return params_.size(); }
  std::vector<double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> values) override;

  std::vector<double> logprobs(std::span<const int> prompt,
                               std::span<const int> response) const override;
  void accumulate_weighted_grad(std::span<const int> prompt, std::span<const int> response,
                                std::span<const double> weights,
                                std::span<double> grad) const override;
  SampleResult sample(std::span<const int> prompt, int max_len, double temperature,
                      std::uint64_t seed) const override;

  std::unique_ptr<AutoregressivePolicy> clone() const override;
  void save(std::ostream& out) const override;
  static GatedRecurrentPolicy load(std::istream& in);

 private:
  struct Offsets {
    std::size_t embed, w_z, u_z, b_z, w_c, u_c, b_c, w_o, b_o, total;
  };
  static Offsets layout(int vocab_size, int dim);

  void check_tokens(std::span<const int> tokens) const;
  void step(std::span<const double> params, int token, std::vector<double>& h,
            std::vector<double>* z_out, std::vector<double>* c_out) const;
  std::vector<double> token_logprobs(std::span<const double> params,
                                     const std::vector<double>& h) const;

  Vocabulary vocab_;
  int dim_;
  Offsets off_;
  std::vector<double> params_;
};

std::unique_ptr<AutoregressivePolicy> load_policy(std::istream& in);
void save_policy_file(const AutoregressivePolicy& policy, const std::string& path);
std::unique_ptr<AutoregressivePolicy> load_policy_file(const std::string& path);

// Evaluates a scalar objective and its analytic gradient at the current
// parameters.
using ObjectiveFn =
    std::function<std::pair<double, std::vector<double>>(const AutoregressivePolicy&)>;

// Central-difference check of the analytic gradient on n_coords randomly
// selected coordinates (all coordinates when n_coords <= 0). Returns the
// maximum relative error. Restores the parameters before returning.
double grad_check(AutoregressivePolicy& policy, const ObjectiveFn& objective, int n_coords,
                  double fd_step, std::uint64_t seed = 0);

}  // namespace sgrpo::policy
