// Trains a small geometric-attention captioner on a generated corpus and
// captions a few validation scenes.

#include <cstdio>

#include "ort/ablation.hpp"

int main() {
  using namespace ort;
  CorpusConfig cc;
  cc.n_scenes = 200;
  const Corpus corpus = generate_corpus(3, cc);
  const Vocab vocab = build_vocab(corpus.captions, corpus.train);

  ModelConfig mc = toy_model_config();
  mc.mode = encoder_mode_from_string("geometric");
  mc.vocab_size = vocab.size();
  TrainConfig tc = toy_train_config();
  tc.epochs = 4;
  tc.seed = 3;
  const Dataset ds = make_dataset(corpus, vocab, mc.max_caption_len);

  Trainer trainer(mc, init_params<float>(mc, tc.seed), ds, tc);
  while (!trainer.done()) {
    trainer.run_epoch();
    const auto& e = trainer.log().epochs.back();
    std::printf("epoch %zu  train %.4f  val %.4f\n", e.epoch + 1, e.train_loss, e.val_loss);
  }

  const CaptionModel<float> model(mc, trainer.best_params());
  const DecodeConfig dc = eval_decode_config(5, 20);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto i = corpus.val[k];
    const auto& img = ds.images[i];
    std::printf("\n%s\n  model:     %s\n  reference: %s\n", img.image_id.c_str(),
                vocab.decode(caption_image(model, img.features, img.boxes, dc)).c_str(),
                corpus.captions[i].captions.front().c_str());
  }
  return 0;
}
