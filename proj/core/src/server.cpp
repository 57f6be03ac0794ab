#include "latte/server.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace latte {

static_assert(std::endian::native == std::endian::little,
              "wire format assumes a little-endian host");

double similarity(Similarity kind, const Vec& a, const Vec& b) {
  switch (kind) {
    case Similarity::cosine:
      return dot(a, b);
    case Similarity::neg_sq_l2:
      return -0.5 * sq_dist(a, b);
  }
  raise(ErrorCode::InvalidArgument, "unknown similarity kind");
}

GlobalMemory::GlobalMemory(std::size_t num_classes, std::size_t num_clients,
                           std::size_t dim, Similarity sim)
    : num_classes_(num_classes),
      num_clients_(num_clients),
      dim_(dim),
      sim_(sim),
      slots_(num_classes, std::vector<Vec>(num_clients)) {
  if (num_classes < 1 || num_clients < 1 || dim < 1) {
    raise(ErrorCode::InvalidArgument,
          "GlobalMemory needs classes, clients and dim >= 1");
  }
  class_locks_.reserve(num_classes);
  for (std::size_t y = 0; y < num_classes; ++y) {
    class_locks_.push_back(std::make_unique<std::mutex>());
  }
}

void GlobalMemory::check_client(int client) const {
  if (client < 0 || static_cast<std::size_t>(client) >= num_clients_) {
    raise(ErrorCode::BadClient, "client " + std::to_string(client) +
                                    " out of range [0, " +
                                    std::to_string(num_clients_) + ")");
  }
}

void GlobalMemory::upload(int client,
                          const std::vector<std::optional<Vec>>& protos) {
  check_client(client);
  if (protos.size() != num_classes_) {
    raise(ErrorCode::DimMismatch,
          "upload carries " + std::to_string(protos.size()) +
              " classes, server has " + std::to_string(num_classes_));
  }
  for (std::size_t y = 0; y < num_classes_; ++y) {
    if (!protos[y].has_value()) continue;
    if (protos[y]->size() != dim_) {
      raise(ErrorCode::DimMismatch,
            "prototype for class " + std::to_string(y) + " has dim " +
                std::to_string(protos[y]->size()) + ", server dim " +
                std::to_string(dim_));
    }
    std::lock_guard<std::mutex> lock(*class_locks_[y]);
    slots_[y][static_cast<std::size_t>(client)] = *protos[y];
  }
}

RetrievalResponse GlobalMemory::retrieve(
    int client, const std::vector<std::optional<Vec>>& queries,
    std::size_t k_e) const {
  check_client(client);
  if (queries.size() != num_classes_) {
    raise(ErrorCode::DimMismatch,
          "retrieval carries " + std::to_string(queries.size()) +
              " classes, server has " + std::to_string(num_classes_));
  }
  RetrievalResponse resp;
  resp.per_class.resize(num_classes_);
  if (k_e == 0) return resp;

  for (std::size_t y = 0; y < num_classes_; ++y) {
    if (!queries[y].has_value()) continue;
    const Vec& q = *queries[y];
    if (q.size() != dim_) {
      raise(ErrorCode::DimMismatch,
            "query for class " + std::to_string(y) + " has wrong dim");
    }
    std::vector<RetrievedProto> candidates;
    {
      std::lock_guard<std::mutex> lock(*class_locks_[y]);
      for (std::size_t j = 0; j < num_clients_; ++j) {
        if (j == static_cast<std::size_t>(client)) continue;
        const Vec& slot = slots_[y][j];
        if (slot.empty()) continue;
        candidates.push_back(
            {static_cast<int>(j), slot, similarity(sim_, slot, q)});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const RetrievedProto& a, const RetrievedProto& b) {
                if (a.sim != b.sim) return a.sim > b.sim;
                return a.origin < b.origin;
              });
    if (candidates.size() > k_e) candidates.resize(k_e);
    resp.per_class[y] = std::move(candidates);
  }
  return resp;
}

std::optional<Vec> GlobalMemory::slot(std::size_t y, int client) const {
  check_client(client);
  if (y >= num_classes_) {
    raise(ErrorCode::BadClass, "class " + std::to_string(y) + " out of range");
  }
  std::lock_guard<std::mutex> lock(*class_locks_[y]);
  const Vec& v = slots_[y][static_cast<std::size_t>(client)];
  if (v.empty()) return std::nullopt;
  return v;
}

bool GlobalMemory::fully_populated() const {
  for (std::size_t y = 0; y < num_classes_; ++y) {
    std::lock_guard<std::mutex> lock(*class_locks_[y]);
    for (const auto& slot : slots_[y]) {
      if (slot.empty()) return false;
    }
  }
  return true;
}

namespace {

template <typename T>
void append_raw(std::vector<std::uint8_t>& buf, const T& value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T read_raw(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
  if (offset + sizeof(T) > buf.size()) {
    raise(ErrorCode::TruncatedFile, "wire record truncated");
  }
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_wire_record(const WireRecord& rec) {
  std::vector<std::uint8_t> buf;
  const std::uint32_t dim = static_cast<std::uint32_t>(rec.payload.size());
  const std::uint32_t length = 13 + 4 * dim;
  buf.reserve(4 + length);
  append_raw(buf, length);
  append_raw(buf, static_cast<std::uint8_t>(rec.op));
  append_raw(buf, rec.client);
  append_raw(buf, rec.cls);
  append_raw(buf, dim);
  for (float x : rec.payload) append_raw(buf, x);
  return buf;
}

WireRecord decode_wire_record(const std::vector<std::uint8_t>& buf,
                              std::size_t& offset) {
  const auto length = read_raw<std::uint32_t>(buf, offset);
  const std::size_t end = offset + length;
  if (end > buf.size()) {
    raise(ErrorCode::TruncatedFile, "wire record body truncated");
  }
  WireRecord rec;
  const auto op = read_raw<std::uint8_t>(buf, offset);
  if (op != static_cast<std::uint8_t>(WireOp::upload) &&
      op != static_cast<std::uint8_t>(WireOp::download)) {
    raise(ErrorCode::BadMagic, "unknown wire opcode " + std::to_string(op));
  }
  rec.op = static_cast<WireOp>(op);
  rec.client = read_raw<std::uint32_t>(buf, offset);
  rec.cls = read_raw<std::uint32_t>(buf, offset);
  const auto dim = read_raw<std::uint32_t>(buf, offset);
  if (length != 13 + 4 * dim) {
    raise(ErrorCode::BadMagic, "wire record length disagrees with dim");
  }
  rec.payload.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    rec.payload[i] = read_raw<float>(buf, offset);
  }
  return rec;
}

}  // namespace latte
