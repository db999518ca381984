#ifndef LMC_BINIO_HPP
#define LMC_BINIO_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace lmc {

// Little-endian byte buffer helpers used by the checkpoint container.
struct ByteWriter {
  std::vector<uint8_t> bytes;

  void raw(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u8(uint8_t v) { bytes.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t b;
    std::memcpy(&b, &v, 4);
    u32(b);
  }
  void f64(double v) {
    uint64_t b;
    std::memcpy(&b, &v, 8);
    u64(b);
  }
};

struct ByteReader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;

  ByteReader(const uint8_t* data, size_t size) : p(data), n(size) {}

  bool need(size_t k) const { return pos + k <= n; }
  void raw(void* out, size_t k);
  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
};

// CRC-32 (IEEE, reflected polynomial 0xEDB88320)
uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

// big-endian u32, for the IDX format
uint32_t be32(const uint8_t* p);
void put_be32(std::vector<uint8_t>& out, uint32_t v);

}  // namespace lmc

#endif
