#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "auxcal/baselines.hpp"
#include "auxcal/clustering.hpp"
#include "auxcal/error.hpp"
#include "auxcal/gateway.hpp"
#include "auxcal/grading.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/pipeline.hpp"
#include "auxcal/report.hpp"

namespace py = pybind11;
using namespace auxcal;

namespace {

ConfidenceSeries series(std::vector<double> conf, const std::vector<bool>& correct) {
  return {std::move(conf), correct, "series"};
}

Metric metric_named(const std::string& name) {
  for (Metric m : {Metric::brier, Metric::ece, Metric::smece, Metric::auroc}) {
    if (name == to_string(m)) return m;
  }
  throw PreconditionError("unknown metric '" + name + "'");
}

PipelineConfig config_from_text(const std::string& text) { return config_from_json(nlohmann::json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_auxcal, m) {
  m.doc() = "Auxiliary confidence calibration toolkit (native core)";

  auto base = py::register_exception<Error>(m, "AuxcalError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<FixtureMissError>(m, "FixtureMissError", base.ptr());
  py::register_exception<MissingFieldError>(m, "MissingFieldError", base.ptr());

  m.def("normalize_answer", [](const std::string& t) { return normalize_answer(t); });
  m.def("rouge_l", [](const std::string& c, const std::string& r) { return rouge_l(c, r); });
  m.def(
      "grade_answer",
      [](const std::string& answer, const std::vector<std::string>& gold, double threshold) {
        GradeConfig cfg;
        cfg.rouge_threshold = threshold;
        return grade_answer(answer, gold, cfg);
      },
      py::arg("answer"), py::arg("gold_answers"), py::arg("threshold") = 0.3);

  m.def(
      "compute_ece",
      [](std::vector<double> c, std::vector<bool> y, std::size_t bins) { return compute_ece(series(c, y), bins); },
      py::arg("confidences"), py::arg("correct"), py::arg("n_bins") = 10);
  m.def("compute_brier", [](std::vector<double> c, std::vector<bool> y) { return compute_brier(series(c, y)); });
  m.def("compute_auroc", [](std::vector<double> c, std::vector<bool> y) { return compute_auroc(series(c, y)); });
  m.def("compute_smece", [](std::vector<double> c, std::vector<bool> y) { return compute_smece(series(c, y)); });
  m.def(
      "reliability_table",
      [](std::vector<double> c, std::vector<bool> y, std::size_t bins) {
        py::list out;
        for (const auto& b : reliability_table(series(c, y), bins)) {
          py::dict d;
          d["index"] = b.index;
          d["lower"] = b.lower;
          d["upper"] = b.upper;
          d["count"] = b.count;
          d["accuracy"] = b.accuracy;
          d["mean_confidence"] = b.mean_confidence;
          d["proportion"] = b.proportion;
          out.append(d);
        }
        return out;
      },
      py::arg("confidences"), py::arg("correct"), py::arg("n_bins") = 10);
  m.def(
      "bootstrap_se",
      [](const std::string& metric, std::vector<double> c, std::vector<bool> y, std::size_t n, std::uint64_t seed) {
        BootstrapOptions o;
        o.n_resamples = n;
        o.seed = seed;
        const auto e = bootstrap_se(metric_function(metric_named(metric)), series(c, y), o);
        return std::pair{e.value, e.se};
      },
      py::arg("metric"), py::arg("confidences"), py::arg("correct"), py::arg("n_resamples") = 100,
      py::arg("seed") = 0);
  m.def(
      "render_reliability_svg",
      [](std::vector<double> c, std::vector<bool> y, const std::string& label, std::size_t bins) {
        const auto table = reliability_table(series(c, y), bins);
        return render_reliability_svg(table, label);
      },
      py::arg("confidences"), py::arg("correct"), py::arg("label"), py::arg("n_bins") = 10);

  m.def("normalized_seq_likelihood", [](const std::vector<double>& lp) { return normalized_seq_likelihood(lp); });
  m.def("parse_verbalized_percent", [](const std::string& t) { return parse_verbalized_percent(t); });
  m.def("parse_verbalized_qualitative", [](const std::string& t) { return parse_verbalized_qualitative(t); });
  m.def("fit_platt", [](std::vector<double> c, std::vector<bool> y) {
    const auto f = fit_platt(c, y);
    py::dict d;
    d["a"] = f.params.a;
    d["b"] = f.params.b;
    d["initial_mse"] = f.initial_mse;
    d["fitted_mse"] = f.fitted_mse;
    d["single_class"] = f.single_class;
    return d;
  });
  m.def("apply_platt", [](double a, double b, double p) { return apply_platt({a, b}, p); });

  m.def("core_distances", [](const std::vector<std::vector<double>>& pts, std::size_t k) {
    return core_distances(Matrix::from_rows(pts), k);
  });
  m.def("mutual_reachability_mst", [](const std::vector<std::vector<double>>& pts, std::size_t k) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> out;
    for (const auto& e : mutual_reachability_mst(Matrix::from_rows(pts), k)) out.emplace_back(e.u, e.v, e.weight);
    return out;
  });
  m.def(
      "cluster_questions",
      [](const std::vector<std::vector<double>>& pts, std::size_t mcs, std::size_t ms) {
        return cluster_questions(Matrix::from_rows(pts), {mcs, ms}).labels;
      },
      py::arg("points"), py::arg("min_cluster_size") = 3, py::arg("min_samples") = 2);
  m.def("assign_calibration_targets", [](const std::vector<int>& labels, const std::vector<bool>& correct) {
    std::vector<std::optional<bool>> c(correct.begin(), correct.end());
    return assign_calibration_targets(labels, c);
  });

  m.def(
      "build_qa_prompt",
      [](const std::string& question, const std::string& style, bool cot,
         const std::vector<std::pair<std::string, std::string>>& icl, std::optional<std::string> context) {
        CalibrationRecord r;
        r.id = "prompt";
        r.question = question;
        r.context = std::move(context);
        PromptSpec spec;
        spec.style = parse_prompt_style(style);
        spec.cot = cot;
        for (const auto& [q, a] : icl) spec.icl_examples.push_back({q, a});
        return build_qa_prompt(r, spec);
      },
      py::arg("question"), py::arg("style") = "trivia", py::arg("cot") = false,
      py::arg("icl") = std::vector<std::pair<std::string, std::string>>{}, py::arg("context") = py::none());
  m.def("build_confidence_prompt", [](const std::string& q, const std::string& a, const std::string& mode) {
    return build_confidence_prompt(q, a, parse_confidence_mode(mode));
  });
  m.def(
      "truncate_at_stop",
      [](const std::string& text, const std::vector<std::string>& extra) { return truncate_at_stop(text, extra); },
      py::arg("text"), py::arg("extra_stops") = std::vector<std::string>{});

  m.def("_load_corpus_json", [](const std::filesystem::path& p) {
    std::vector<std::string> out;
    for (const auto& r : load_corpus(p)) out.push_back(to_json(r).dump());
    return out;
  });
  m.def("_run_stage", [](const std::string& stage, const std::string& cfg) {
    py::gil_scoped_release release;
    run_stage(parse_stage(stage), config_from_text(cfg));
  });
  m.def("_run_pipeline", [](const std::string& cfg, const std::filesystem::path& workdir) {
    py::gil_scoped_release release;
    run_pipeline(config_from_text(cfg), workdir);
  });
  m.def("_synthesize_fixture_run",
        [](const std::string& cfg, const std::filesystem::path& corpus, const std::filesystem::path& fixtures) {
          py::gil_scoped_release release;
          synthesize_fixture_run(config_from_text(cfg), corpus, fixtures);
        });
}
