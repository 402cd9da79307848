#include "sckn/checkpoint.hpp"

#include <cstdio>
#include <cstring>

namespace sckn {

namespace {

struct Writer {
  std::FILE* f;
  long long pos = 0;

  void bytes(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw FormatError("checkpoint write failed", pos);
    pos += static_cast<long long>(n);
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void matrix(const Matrix& m) { bytes(m.data(), sizeof(double) * m.size()); }
};

struct Reader {
  std::FILE* f;
  long long pos = 0;

  void bytes(void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) throw FormatError("checkpoint truncated", pos);
    pos += static_cast<long long>(n);
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    bytes(m.data(), sizeof(double) * m.size());
    return m;
  }
};

constexpr char kMagic[4] = {'S', 'C', 'K', 'N'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError("cannot open for writing " + path);
  Writer w{f};
  try {
    w.bytes(kMagic, 4);
    w.u32(Checkpoint::kVersion);

    const NetworkParams* net = ckpt.net ? &*ckpt.net : nullptr;
    w.u32(net ? static_cast<uint32_t>(net->input_channels) : 0u);
    w.u32(net ? static_cast<uint32_t>(net->layers.size()) : 0u);
    if (net) {
      for (const LayerParams& l : net->layers) {
        w.u32(static_cast<uint32_t>(l.patch_dim()));
        w.u32(static_cast<uint32_t>(l.filters_out()));
        w.u32(static_cast<uint32_t>(l.patch_size));
        w.f64(l.kernel.alpha);
        w.f64(l.epsilon);
        w.u8(l.pool ? 1 : 0);
        if (l.pool) {
          w.f64(l.pool->subsampling);
          w.f64(l.pool->beta);
          w.f64(l.pool->truncation_radius);
          w.u8(l.pool->normalize ? 1 : 0);
        }
        w.matrix(l.filters);
      }
    }

    w.u8(static_cast<uint8_t>(ckpt.head_kind));
    if (ckpt.head_kind == Checkpoint::HeadKind::Classifier) {
      w.u32(static_cast<uint32_t>(ckpt.classes));
      w.u32(static_cast<uint32_t>(ckpt.W.rows()));
      w.u32(static_cast<uint32_t>(ckpt.W.cols()));
      w.f64(ckpt.lambda);
      w.matrix(ckpt.W);
      w.u32(static_cast<uint32_t>(ckpt.whitening.neighborhood));
      w.u32(static_cast<uint32_t>(ckpt.whitening.channels));
      w.u32(static_cast<uint32_t>(ckpt.whitening.zca.rows()));
      w.matrix(ckpt.whitening.zca);
    } else if (ckpt.head_kind == Checkpoint::HeadKind::Sr) {
      w.u32(static_cast<uint32_t>(ckpt.sr_scale));
      w.u32(static_cast<uint32_t>(ckpt.sr_mean_filter));
      w.u32(static_cast<uint32_t>(ckpt.sr_head.size()));
      w.f64(ckpt.sr_lambda);
      w.bytes(ckpt.sr_head.data(), sizeof(double) * ckpt.sr_head.size());
    }

    w.u32(static_cast<uint32_t>(ckpt.history.size()));
    for (const EpochRecord& e : ckpt.history) {
      w.f64(e.objective);
      w.u8(e.accepted ? 1 : 0);
      w.f64(e.eta);
      w.u32(static_cast<uint32_t>(e.active_samples));
    }
    w.u64(ckpt.seed);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path);
  Reader r{f};
  Checkpoint ckpt;
  try {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
      throw FormatError("bad checkpoint magic in " + path, 0);
    const uint32_t version = r.u32();
    if (version != Checkpoint::kVersion)
      throw FormatError("checkpoint version mismatch (file " + std::to_string(version) +
                            ", expected " + std::to_string(Checkpoint::kVersion) + ")",
                        4);

    const uint32_t input_channels = r.u32();
    const uint32_t nlayers = r.u32();
    if (nlayers > 0 || input_channels > 0) {
      NetworkParams net;
      net.input_channels = static_cast<int>(input_channels);
      for (uint32_t j = 0; j < nlayers; ++j) {
        const uint32_t pd = r.u32();
        const uint32_t pf = r.u32();
        const uint32_t e = r.u32();
        const double alpha = r.f64();
        const double eps = r.f64();
        std::optional<PoolSpec> pool;
        if (r.u8()) {
          PoolSpec ps;
          ps.subsampling = r.f64();
          ps.beta = r.f64();
          ps.truncation_radius = r.f64();
          ps.normalize = r.u8() != 0;
          pool = ps;
        }
        Matrix Z = r.matrix(pd, pf);
        net.layers.emplace_back(std::move(Z), KernelSpec(alpha), static_cast<int>(e), pool,
                                eps);
      }
      net.validate();
      ckpt.net = std::move(net);
    }

    ckpt.head_kind = static_cast<Checkpoint::HeadKind>(r.u8());
    if (ckpt.head_kind == Checkpoint::HeadKind::Classifier) {
      ckpt.classes = static_cast<int>(r.u32());
      const uint32_t rows = r.u32();
      const uint32_t cols = r.u32();
      ckpt.lambda = r.f64();
      ckpt.W = r.matrix(rows, cols);
      ckpt.whitening.neighborhood = static_cast<int>(r.u32());
      ckpt.whitening.channels = static_cast<int>(r.u32());
      const uint32_t zd = r.u32();
      ckpt.whitening.zca = r.matrix(zd, zd);
      ckpt.whitening.fitted = zd > 0;
    } else if (ckpt.head_kind == Checkpoint::HeadKind::Sr) {
      ckpt.sr_scale = static_cast<int>(r.u32());
      ckpt.sr_mean_filter = static_cast<int>(r.u32());
      const uint32_t d = r.u32();
      ckpt.sr_lambda = r.f64();
      ckpt.sr_head.resize(d);
      r.bytes(ckpt.sr_head.data(), sizeof(double) * d);
    } else if (ckpt.head_kind != Checkpoint::HeadKind::None) {
      throw FormatError("unknown checkpoint head kind", r.pos - 1);
    }

    const uint32_t hist = r.u32();
    for (uint32_t i = 0; i < hist; ++i) {
      EpochRecord e;
      e.objective = r.f64();
      e.accepted = r.u8() != 0;
      e.eta = r.f64();
      e.active_samples = static_cast<int>(r.u32());
      ckpt.history.push_back(e);
    }
    ckpt.seed = r.u64();
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return ckpt;
}

Checkpoint make_classifier_checkpoint(const ClassifierHead& head,
                                      std::vector<EpochRecord> history, uint64_t seed) {
  Checkpoint c;
  c.net = head.net;
  c.head_kind = Checkpoint::HeadKind::Classifier;
  c.W = head.model.W;
  c.lambda = head.model.lambda;
  c.classes = head.classes;
  c.whitening = head.whitening;
  c.history = std::move(history);
  c.seed = seed;
  return c;
}

ClassifierHead classifier_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.head_kind != Checkpoint::HeadKind::Classifier || !ckpt.net)
    throw std::invalid_argument("checkpoint does not hold a classifier");
  ClassifierHead head;
  head.net = *ckpt.net;
  head.model = {ckpt.W, ckpt.lambda};
  head.classes = ckpt.classes;
  head.whitening = ckpt.whitening;
  return head;
}

Checkpoint make_sr_checkpoint(const SrModel& model, uint64_t seed) {
  Checkpoint c;
  c.net = model.net;
  c.head_kind = Checkpoint::HeadKind::Sr;
  c.sr_head = model.head;
  c.sr_lambda = model.head_lambda;
  c.sr_scale = model.scale;
  c.sr_mean_filter = model.mean_filter;
  c.seed = seed;
  return c;
}

SrModel sr_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.head_kind != Checkpoint::HeadKind::Sr || !ckpt.net)
    throw std::invalid_argument("checkpoint does not hold a super-resolution model");
  SrModel m;
  m.net = *ckpt.net;
  m.head = ckpt.sr_head;
  m.head_lambda = ckpt.sr_lambda;
  m.scale = ckpt.sr_scale;
  m.mean_filter = ckpt.sr_mean_filter;
  return m;
}

}  // namespace sckn
