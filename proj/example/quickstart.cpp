// Train on a small synthetic set, then score video-level aggregations.
#include <cstdio>

#include "cef/cef.hpp"

int main() {
  cef::SynthConfig data;
  data.videos = 14;
  data.frames = 12;
  const auto train_set = cef::synth_dataset(data);
  data.split = "val";
  const auto val_set = cef::synth_dataset(data);

  cef::ModelConfig model;
  model.d_model = 64;
  cef::TrainConfig opt;
  opt.epochs = 10;
  opt.patience = 3;
  const auto result = cef::train(train_set, val_set, model, opt, [](const cef::EpochRecord& e) {
    std::printf("epoch %zu loss %.4f val macro F1 %.3f\n", e.epoch, e.mean_loss, *e.val_macro_f1);
  });

  std::vector<cef::FramePredictions> preds;
  std::vector<cef::GoldLabels> gold;
  for (const auto& b : val_set) {
    preds.push_back(cef::predict(b, result.params));
    gold.push_back({b.video_id, b.label, std::nullopt});
  }
  std::vector<cef::MetricsReport> reports;
  for (auto m : cef::kAllMethods)
    reports.push_back(cef::evaluate(preds, gold, model.classes, cef::EvalLevel::video, m));
  std::printf("%s", cef::format_report_table(reports, cef::default_class_names(model.classes)).c_str());
}
