// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/llm_gateway.hpp"
#include "qakit/qa_pair.hpp"

namespace qakit::classifier {

enum class Label { Factual, Conceptual };
enum class AnnotationSource { Llm, Human, Model };

std::string_view to_string(Label label) noexcept;
Label parse_label_name(std::string_view name);
std::string_view to_string(AnnotationSource source) noexcept;
AnnotationSource parse_source(std::string_view name);

struct AnnotatedPair {
  std::string pair_id;
  Label label = Label::Factual;
  AnnotationSource source = AnnotationSource::Llm;
  std::optional<double> confidence;
  std::optional<std::string> rationale;

  bool operator==(const AnnotatedPair&) const = default;
};

struct UnlabeledReply {
  std::string pair_id;
  std::string raw_reply;
};

struct AnnotationResult {
  std::vector<AnnotatedPair> annotated;
  std::vector<UnlabeledReply> unlabeled;
};

struct AnnotationOptions {
  std::string provider_id = "mock";
  std::string model_id = "gpt-4-turbo";
  std::optional<std::int64_t> seed;
  std::size_t concurrency = 4;
};

/// Reads a label from an annotator reply: exactly one of the words
/// "factual" / "conceptual" (any case) must occur.
std::optional<Label> parse_label(std::string_view reply);

/// Asks the annotator for one label per pair. The template needs
/// {question}; {answer} is filled when present.
AnnotationResult annotate_llm(std::span<const QAPair> pairs, std::string_view annotation_prompt,
                              llm::Gateway& gateway, const AnnotationOptions& options);

void write_annotations(const std::filesystem::path& path, const AnnotationResult& result);
AnnotationResult read_annotations(const std::filesystem::path& path);

struct FeatureSpec {
  std::size_t embedding_dimension = 0;
  /// Concatenate the answer embedding after the question embedding.
  bool include_answer = false;

  std::size_t width() const noexcept { return include_answer ? 2 * embedding_dimension : embedding_dimension; }
  bool operator==(const FeatureSpec&) const = default;
};

/// Row-major feature rows.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

struct TrainingHyper {
  double learning_rate = 1.0;
  double l2_strength = 1e-3;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-10;
  std::uint64_t seed = 42;
  double held_out_fraction = 0.2;
};

struct TrainingMeta {
  std::size_t iterations = 0;
  double learning_rate = 0.0;
  double l2_strength = 0.0;
  double held_out_accuracy = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::size_t train_size = 0;
  std::size_t held_out_size = 0;
};

struct ClassifierModel {
  FeatureSpec feature_spec;
  std::vector<double> weights;
  double bias = 0.0;
  TrainingMeta training_meta;

  static ClassifierModel zero(FeatureSpec spec);

  nlohmann::json to_json() const;
  static ClassifierModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);
};

double logistic(double z) noexcept;

/// Mean binary cross-entropy plus (l2/2)*||w||^2 (bias unpenalized), with
/// its analytic gradient. Labels are 1 for Conceptual, 0 for Factual.
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

LossGradient loss_and_gradient(std::span<const double> weights, double bias, const FeatureMatrix& x,
                               std::span<const int> y, double l2_strength);

struct FitResult {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  std::vector<double> loss_history;
};

/// Full-batch gradient descent from zero. Stops once the loss changes by
/// less than `tolerance` or after max_iterations steps. A non-finite loss
/// raises a Training error.
FitResult fit_logistic(const FeatureMatrix& x, std::span<const int> y, const TrainingHyper& hyper);

/// Holds out round(held_out_fraction * n) rows (at least one when the
/// fraction is positive) by seeded permutation, fits on the rest and scores
/// the held-out rows. Requires at least two examples of each label.
ClassifierModel train_on_features(const FeatureMatrix& x, std::span<const int> y,
                                  const TrainingHyper& hyper, const FeatureSpec& spec);

FeatureMatrix build_features(std::span<const QAPair> pairs, const FeatureSpec& spec, llm::Gateway& gateway);

ClassifierModel train(std::span<const AnnotatedPair> annotated, std::span<const QAPair> pairs,
                      const TrainingHyper& hyper, const FeatureSpec& spec, llm::Gateway& gateway);

struct Prediction {
  Label label = Label::Conceptual;
  double probability_conceptual = 0.5;
};

/// Conceptual iff probability >= 0.5, so an exact tie goes to Conceptual.
Prediction predict_features(const ClassifierModel& model, std::span<const double> features);
Prediction predict(const ClassifierModel& model, const QAPair& pair, llm::Gateway& gateway);

struct ClassifiedPair {
  QAPair pair;
  double probability_conceptual = 0.0;
};

struct SplitResult {
  std::vector<ClassifiedPair> conceptual;
  std::vector<ClassifiedPair> factual;
};

SplitResult split_by_label(std::span<const QAPair> pairs, const ClassifierModel& model,
                           llm::Gateway& gateway);

}  // namespace qakit::classifier
