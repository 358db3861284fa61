// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/qa_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/parallel.hpp"
#include "qakit/prompts.hpp"
#include "qakit/text.hpp"

namespace qakit::classifier {

std::string_view to_string(Label label) noexcept {
  return label == Label::Conceptual ? "Conceptual" : "Factual";
}

Label parse_label_name(std::string_view name) {
  const auto lower = text::to_lower(name);
  if (lower == "conceptual") return Label::Conceptual;
  if (lower == "factual") return Label::Factual;
  raise(ErrorKind::Parameter, fmt::format("unknown label '{}' (expected Factual or Conceptual)", name));
}

std::string_view to_string(AnnotationSource source) noexcept {
  switch (source) {
    case AnnotationSource::Llm: return "llm";
    case AnnotationSource::Human: return "human";
    case AnnotationSource::Model: return "model";
  }
  return "llm";
}

AnnotationSource parse_source(std::string_view name) {
  if (name == "llm") return AnnotationSource::Llm;
  if (name == "human") return AnnotationSource::Human;
  if (name == "model") return AnnotationSource::Model;
  raise(ErrorKind::Parameter, fmt::format("unknown annotation source '{}'", name));
}

std::optional<Label> parse_label(std::string_view reply) {
  bool factual = false, conceptual = false;
  for (const auto& t : text::tokens(reply)) {
    factual = factual || t == "factual";
    conceptual = conceptual || t == "conceptual";
  }
  if (factual == conceptual) return std::nullopt;
  return conceptual ? Label::Conceptual : Label::Factual;
}

AnnotationResult annotate_llm(std::span<const QAPair> pairs, std::string_view annotation_prompt,
                              llm::Gateway& gateway, const AnnotationOptions& options) {
  if (!prompts::has_placeholder(annotation_prompt, "question"))
    raise(ErrorKind::Parameter, "annotation template lacks the {question} placeholder");

  struct Outcome {
    std::optional<Label> label;
    std::string reply;
  };
  auto outcomes = parallel_map<Outcome>(pairs.size(), options.concurrency, [&](std::size_t i) {
    const auto prompt = prompts::render(annotation_prompt,
                                        {{"question", pairs[i].question}, {"answer", pairs[i].answer}});
    auto request = llm::user_request(options.provider_id, options.model_id, prompt, options.seed);
    request.max_output_tokens = 16;
    try {
      auto reply = gateway.complete(request).content;
      auto label = parse_label(reply);
      return Outcome{label, std::move(reply)};
    } catch (const Error& e) {
      return Outcome{std::nullopt, fmt::format("<error: {}>", e.what())};
    }
  });

  AnnotationResult result;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.label) {
      spdlog::warn("annotation for {} has no label token: {}", pairs[i].pair_id, o.reply);
      result.unlabeled.push_back({pairs[i].pair_id, std::move(o.reply)});
      continue;
    }
    AnnotatedPair a;
    a.pair_id = pairs[i].pair_id;
    a.label = *o.label;
    a.source = AnnotationSource::Llm;
    auto trimmed = text::trim(o.reply);
    if (text::word_count(trimmed) > 1) a.rationale = std::move(trimmed);
    result.annotated.push_back(std::move(a));
  }
  return result;
}

void write_annotations(const std::filesystem::path& path, const AnnotationResult& result) {
  std::vector<json> rows;
  for (const auto& a : result.annotated) {
    rows.push_back({{"pair_id", a.pair_id},
                    {"label", to_string(a.label)},
                    {"source", to_string(a.source)},
                    {"confidence", a.confidence ? json(*a.confidence) : json(nullptr)},
                    {"rationale", a.rationale ? json(*a.rationale) : json(nullptr)}});
  }
  for (const auto& u : result.unlabeled)
    rows.push_back({{"pair_id", u.pair_id}, {"label", nullptr}, {"source", "llm"}, {"raw_reply", u.raw_reply}});
  write_jsonl(path, rows);
}

AnnotationResult read_annotations(const std::filesystem::path& path) {
  AnnotationResult result;
  for (const auto& row : read_jsonl(path)) {
    if (row.at("label").is_null()) {
      result.unlabeled.push_back({row.at("pair_id").get<std::string>(), row.value("raw_reply", std::string())});
      continue;
    }
    AnnotatedPair a;
    a.pair_id = row.at("pair_id").get<std::string>();
    a.label = parse_label_name(row.at("label").get<std::string>());
    a.source = parse_source(row.value("source", std::string("llm")));
    if (row.contains("confidence") && !row["confidence"].is_null()) a.confidence = row["confidence"].get<double>();
    if (row.contains("rationale") && !row["rationale"].is_null()) a.rationale = row["rationale"].get<std::string>();
    result.annotated.push_back(std::move(a));
  }
  return result;
}

ClassifierModel ClassifierModel::zero(FeatureSpec spec) {
  ClassifierModel m;
  m.feature_spec = spec;
  m.weights.assign(spec.width(), 0.0);
  return m;
}

nlohmann::json ClassifierModel::to_json() const {
  return {{"feature_spec",
           {{"kind", "question_embedding"},
            {"embedding_dimension", feature_spec.embedding_dimension},
            {"include_answer", feature_spec.include_answer}}},
          {"weights", weights},
          {"bias", bias},
          {"training_meta",
           {{"iterations", training_meta.iterations},
            {"learning_rate", training_meta.learning_rate},
            {"l2_strength", training_meta.l2_strength},
            {"held_out_accuracy", training_meta.held_out_accuracy},
            {"seed", training_meta.seed},
            {"final_loss", training_meta.final_loss},
            {"train_size", training_meta.train_size},
            {"held_out_size", training_meta.held_out_size}}}};
}

ClassifierModel ClassifierModel::from_json(const nlohmann::json& j) {
  ClassifierModel m;
  const auto& fs = j.at("feature_spec");
  m.feature_spec.embedding_dimension = fs.at("embedding_dimension").get<std::size_t>();
  m.feature_spec.include_answer = fs.value("include_answer", false);
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  if (m.weights.size() != m.feature_spec.width())
    raise(ErrorKind::Format, fmt::format("model has {} weights but its feature spec needs {}", m.weights.size(),
                                         m.feature_spec.width()));
  if (j.contains("training_meta")) {
    const auto& t = j["training_meta"];
    m.training_meta.iterations = t.value("iterations", std::size_t{0});
    m.training_meta.learning_rate = t.value("learning_rate", 0.0);
    m.training_meta.l2_strength = t.value("l2_strength", 0.0);
    m.training_meta.held_out_accuracy = t.value("held_out_accuracy", 0.0);
    m.training_meta.seed = t.value("seed", std::uint64_t{0});
    m.training_meta.final_loss = t.value("final_loss", 0.0);
    m.training_meta.train_size = t.value("train_size", std::size_t{0});
    m.training_meta.held_out_size = t.value("held_out_size", std::size_t{0});
  }
  return m;
}

void ClassifierModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

double logistic(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double margin(std::span<const double> w, double b, std::span<const double> row) {
  double z = b;
  for (std::size_t d = 0; d < w.size(); ++d) z += w[d] * row[d];
  return z;
}

FeatureMatrix select_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  FeatureMatrix out{rows.size(), x.cols, {}};
  out.data.reserve(rows.size() * x.cols);
  for (auto r : rows) {
    const auto row = x.row(r);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace

LossGradient loss_and_gradient(std::span<const double> weights, double bias, const FeatureMatrix& x,
                               std::span<const int> y, double l2_strength) {
  if (weights.size() != x.cols) raise(ErrorKind::Parameter, "loss_and_gradient: weight/feature width mismatch");
  if (y.size() != x.rows) raise(ErrorKind::Parameter, "loss_and_gradient: label count mismatch");
  LossGradient out;
  out.grad_w.assign(x.cols, 0.0);
  const double inv_n = x.rows ? 1.0 / static_cast<double>(x.rows) : 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    const double z = margin(weights, bias, row);
    out.loss += softplus(z) - (y[i] ? z : 0.0);
    const double residual = logistic(z) - static_cast<double>(y[i]);
    for (std::size_t d = 0; d < x.cols; ++d) out.grad_w[d] += residual * row[d];
    out.grad_b += residual;
  }
  double sq = 0.0;
  for (std::size_t d = 0; d < x.cols; ++d) {
    out.grad_w[d] = out.grad_w[d] * inv_n + l2_strength * weights[d];
    sq += weights[d] * weights[d];
  }
  out.grad_b *= inv_n;
  out.loss = out.loss * inv_n + 0.5 * l2_strength * sq;
  return out;
}

FitResult fit_logistic(const FeatureMatrix& x, std::span<const int> y, const TrainingHyper& hyper) {
  if (!(hyper.learning_rate > 0.0)) raise(ErrorKind::Parameter, "learning_rate must be positive");
  if (!(hyper.l2_strength >= 0.0)) raise(ErrorKind::Parameter, "l2_strength must be non-negative");
  FitResult fit;
  fit.weights.assign(x.cols, 0.0);
  auto lg = loss_and_gradient(fit.weights, fit.bias, x, y, hyper.l2_strength);
  fit.loss_history.push_back(lg.loss);
  for (std::size_t it = 1; it <= hyper.max_iterations; ++it) {
    for (std::size_t d = 0; d < x.cols; ++d) fit.weights[d] -= hyper.learning_rate * lg.grad_w[d];
    fit.bias -= hyper.learning_rate * lg.grad_b;
    const double prev = lg.loss;
    lg = loss_and_gradient(fit.weights, fit.bias, x, y, hyper.l2_strength);
    if (!std::isfinite(lg.loss))
      raise(ErrorKind::Training, fmt::format("loss became non-finite at iteration {}", it));
    fit.loss_history.push_back(lg.loss);
    fit.iterations = it;
    if (std::abs(prev - lg.loss) < hyper.tolerance) break;
  }
  return fit;
}

ClassifierModel train_on_features(const FeatureMatrix& x, std::span<const int> y, const TrainingHyper& hyper,
                                  const FeatureSpec& spec) {
  if (x.cols != spec.width())
    raise(ErrorKind::Parameter, fmt::format("features have width {}, spec expects {}", x.cols, spec.width()));
  if (y.size() != x.rows) raise(ErrorKind::Parameter, "label count does not match feature rows");
  if (!(hyper.held_out_fraction >= 0.0 && hyper.held_out_fraction < 1.0))
    raise(ErrorKind::Parameter, "held_out_fraction must be in [0, 1)");
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const auto negatives = y.size() - positives;
  if (positives < 2 || negatives < 2)
    raise(ErrorKind::Training, fmt::format("training needs at least 2 examples of each label (got {} Conceptual, "
                                           "{} Factual)",
                                           positives, negatives));

  std::size_t held = static_cast<std::size_t>(std::llround(hyper.held_out_fraction * static_cast<double>(x.rows)));
  if (hyper.held_out_fraction > 0.0) held = std::max<std::size_t>(held, 1);
  held = std::min(held, x.rows - 2);

  const auto perm = seeded_permutation(x.rows, hyper.seed);
  std::vector<std::size_t> held_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(held), perm.end());
  std::sort(held_rows.begin(), held_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  const auto x_train = select_rows(x, train_rows);
  std::vector<int> y_train;
  for (auto r : train_rows) y_train.push_back(y[r]);
  if (std::all_of(y_train.begin(), y_train.end(), [&](int v) { return v == y_train.front(); }))
    raise(ErrorKind::Training, "training split contains a single class; add examples or change the seed");

  auto fit = fit_logistic(x_train, y_train, hyper);

  ClassifierModel model;
  model.feature_spec = spec;
  model.weights = std::move(fit.weights);
  model.bias = fit.bias;

  auto accuracy = [&](std::span<const std::size_t> rows) {
    std::size_t correct = 0;
    for (auto r : rows) {
      const auto p = predict_features(model, x.row(r));
      correct += (p.label == Label::Conceptual) == (y[r] == 1);
    }
    return rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows.size());
  };

  auto& meta = model.training_meta;
  meta.iterations = fit.iterations;
  meta.learning_rate = hyper.learning_rate;
  meta.l2_strength = hyper.l2_strength;
  meta.seed = hyper.seed;
  meta.final_loss = fit.loss_history.back();
  meta.train_size = train_rows.size();
  meta.held_out_size = held_rows.size();
  meta.held_out_accuracy = held_rows.empty() ? accuracy(train_rows) : accuracy(held_rows);
  return model;
}

FeatureMatrix build_features(std::span<const QAPair> pairs, const FeatureSpec& spec, llm::Gateway& gateway) {
  FeatureMatrix x{pairs.size(), spec.width(), {}};
  if (pairs.empty()) return x;
  std::vector<std::string> questions, answers;
  for (const auto& p : pairs) {
    questions.push_back(p.question);
    if (spec.include_answer) answers.push_back(p.answer);
  }
  const auto qv = gateway.embed(questions);
  const auto av = spec.include_answer ? gateway.embed(answers) : std::vector<llm::Embedding>{};
  x.data.reserve(x.rows * x.cols);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (qv[i].size() != spec.embedding_dimension ||
        (spec.include_answer && av[i].size() != spec.embedding_dimension))
      raise(ErrorKind::Parameter, fmt::format("pair {}: embedding dimension {} does not match the feature spec ({})",
                                              pairs[i].pair_id, qv[i].size(), spec.embedding_dimension));
    x.data.insert(x.data.end(), qv[i].begin(), qv[i].end());
    if (spec.include_answer) x.data.insert(x.data.end(), av[i].begin(), av[i].end());
  }
  return x;
}

ClassifierModel train(std::span<const AnnotatedPair> annotated, std::span<const QAPair> pairs,
                      const TrainingHyper& hyper, const FeatureSpec& spec, llm::Gateway& gateway) {
  std::map<std::string, const QAPair*, std::less<>> by_id;
  for (const auto& p : pairs) by_id.emplace(p.pair_id, &p);
  std::vector<QAPair> rows;
  std::vector<int> y;
  for (const auto& a : annotated) {
    auto it = by_id.find(a.pair_id);
    if (it == by_id.end()) raise(ErrorKind::Parameter, fmt::format("annotation references unknown pair {}", a.pair_id));
    rows.push_back(*it->second);
    y.push_back(a.label == Label::Conceptual ? 1 : 0);
  }
  const auto x = build_features(rows, spec, gateway);
  return train_on_features(x, y, hyper, spec);
}

Prediction predict_features(const ClassifierModel& model, std::span<const double> features) {
  if (features.size() != model.weights.size())
    raise(ErrorKind::Parameter, fmt::format("feature dimension {} does not match the model ({})", features.size(),
                                            model.weights.size()));
  Prediction p;
  p.probability_conceptual = logistic(margin(model.weights, model.bias, features));
  p.label = p.probability_conceptual >= 0.5 ? Label::Conceptual : Label::Factual;
  return p;
}

Prediction predict(const ClassifierModel& model, const QAPair& pair, llm::Gateway& gateway) {
  const QAPair one[] = {pair};
  const auto x = build_features(one, model.feature_spec, gateway);
  return predict_features(model, x.row(0));
}

SplitResult split_by_label(std::span<const QAPair> pairs, const ClassifierModel& model, llm::Gateway& gateway) {
  SplitResult out;
  if (pairs.empty()) return out;
  const auto x = build_features(pairs, model.feature_spec, gateway);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto p = predict_features(model, x.row(i));
    auto& bucket = p.label == Label::Conceptual ? out.conceptual : out.factual;
    bucket.push_back({pairs[i], p.probability_conceptual});
  }
  return out;
}

}  // namespace qakit::classifier
