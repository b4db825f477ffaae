#include "varinit/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace varinit {

namespace {

constexpr const char* kHeader = "varinit-checkpoint v1";

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << " " << m.cols() << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      // hexfloat: exact fp64 round trip
      std::snprintf(buf, sizeof buf, "%a", m(i, j));
      out << buf << (j + 1 == m.cols() ? "" : " ");
    }
    out << "\n";
  }
}

Matrix read_matrix(std::istream& in) {
  Eigen::Index rows, cols;
  if (!(in >> rows >> cols))
    throw FormatError("checkpoint: bad matrix header");
  Matrix m(rows, cols);
  std::string tok;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(in >> tok)) throw FormatError("checkpoint: truncated matrix");
      char* end = nullptr;
      m(i, j) = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str())
        throw FormatError("checkpoint: bad value " + tok);
    }
  return m;
}

}  // namespace

void write_network(Network& net, std::ostream& out) {
  out << kHeader << "\n";
  out << "layers " << net.size() << "\n";
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& l = net.layer(i);
    if (auto* d = dynamic_cast<DenseLayer*>(&l)) {
      out << "dense " << d->n_in() << " " << d->n_out() << "\n";
      write_matrix(out, d->weights());
      write_matrix(out, d->bias());
    } else if (auto* a = dynamic_cast<ActivationLayer*>(&l)) {
      const ActivationKind& f = a->activation();
      char buf[3][64];
      std::snprintf(buf[0], 64, "%a", f.alpha);
      std::snprintf(buf[1], 64, "%a", f.mu);
      std::snprintf(buf[2], 64, "%a", f.sigma);
      out << "activation " << f.name() << " " << buf[0] << " " << buf[1]
          << " " << buf[2] << "\n";
    } else if (auto* p = dynamic_cast<DropoutLayer*>(&l)) {
      char buf[64];
      std::snprintf(buf, 64, "%a", p->keep_prob());
      out << "dropout " << buf << "\n";
    } else if (auto* b = dynamic_cast<BatchNormLayer*>(&l)) {
      char mom[64], eps[64];
      std::snprintf(mom, 64, "%a", b->momentum());
      std::snprintf(eps, 64, "%a", b->epsilon());
      out << "batchnorm " << b->features() << " " << b->channels() << " "
          << mom << " " << eps << " " << b->batches_seen() << "\n";
      write_matrix(out, b->gamma());
      write_matrix(out, b->beta());
      write_matrix(out, b->running_mean());
      write_matrix(out, b->running_var());
    } else if (auto* c = dynamic_cast<Conv2dLayer*>(&l)) {
      out << "conv2d " << c->in_h() << " " << c->in_w() << " " << c->c_in()
          << " " << c->c_out() << " " << c->k_h() << " " << c->k_w() << " "
          << c->stride() << " " << c->padding() << "\n";
      write_matrix(out, c->filters());
      write_matrix(out, c->bias());
    } else {
      throw FormatError("checkpoint: unknown layer kind " + l.kind());
    }
  }
}

Network read_network(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw FormatError("checkpoint: missing header, got: " + line);
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "layers")
    throw FormatError("checkpoint: missing layer count");
  Network net;
  auto parse_double = [](const std::string& tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw FormatError("checkpoint: bad value " + tok);
    return v;
  };
  for (std::size_t i = 0; i < count; ++i) {
    std::string kind;
    if (!(in >> kind)) throw FormatError("checkpoint: truncated layer list");
    if (kind == "dense") {
      Eigen::Index n_in, n_out;
      in >> n_in >> n_out;
      Matrix w = read_matrix(in);
      Matrix b = read_matrix(in);
      auto d = std::make_unique<DenseLayer>(n_in, n_out);
      d->weights() = w;
      d->bias() = b;
      net.add(std::move(d));
    } else if (kind == "activation") {
      std::string name, a, m, s;
      in >> name >> a >> m >> s;
      ActivationKind f = parse_activation(name);
      f.alpha = parse_double(a);
      f.mu = parse_double(m);
      f.sigma = parse_double(s);
      net.add(std::make_unique<ActivationLayer>(f));
    } else if (kind == "dropout") {
      std::string p;
      in >> p;
      net.add(std::make_unique<DropoutLayer>(parse_double(p)));
    } else if (kind == "batchnorm") {
      Eigen::Index features;
      int channels;
      std::string mom, eps;
      long seen;
      in >> features >> channels >> mom >> eps >> seen;
      auto b = std::make_unique<BatchNormLayer>(
          features, channels, parse_double(mom), parse_double(eps));
      b->gamma() = read_matrix(in);
      b->beta() = read_matrix(in);
      b->running_mean() = read_matrix(in);
      b->running_var() = read_matrix(in);
      b->set_batches_seen(seen);
      net.add(std::move(b));
    } else if (kind == "conv2d") {
      int in_h, in_w, c_in, c_out, k_h, k_w, stride, padding;
      in >> in_h >> in_w >> c_in >> c_out >> k_h >> k_w >> stride >> padding;
      auto c = std::make_unique<Conv2dLayer>(in_h, in_w, c_in, c_out, k_h,
                                             k_w, stride, padding);
      c->filters() = read_matrix(in);
      c->bias() = read_matrix(in);
      net.add(std::move(c));
    } else {
      throw FormatError("checkpoint: unknown layer kind " + kind);
    }
  }
  return net;
}

void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  write_network(net, out);
  if (!out) throw IoError("write failed: " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_network(in);
}

}  // namespace varinit
