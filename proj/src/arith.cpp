#include "spc/arith.hpp"

#include <cmath>
#include <string>

#include "spc/error.hpp"

namespace spc {

void
ArithEncoder::encode_raw(uint32_t value, int nbits)
{
  for (int i = nbits - 1; i >= 0; --i)
    code(int(value >> i & 1), BitModel::kOne / 2);
}

std::vector<uint8_t>
ArithEncoder::finish()
{
  if (!finished_) {
    ++pending_;
    emit(low_ < arith_detail::kQuarter ? 0 : 1);
    while (nacc_ != 0)
      put(0);
    finished_ = true;
  }
  return out_;
}

//----------------------------------------------------------------------------

ArithDecoder::ArithDecoder(std::span<const uint8_t> data, int64_t base_offset)
  : data_(data), base_(base_offset)
{
  for (int i = 0; i < 32; ++i)
    value_ = value_ << 1 | uint64_t(next_bit());
}

void
ArithDecoder::exhausted() const
{
  throw Error(
    Errc::kDecodeError,
    "entropy-coded payload exhausted at byte " + std::to_string(offset()), offset());
}

void
ArithDecoder::used_after_finish()
{
  throw Error(Errc::kInvalidArgument, "arithmetic encoder already finished");
}

uint32_t
ArithDecoder::decode_raw(int nbits)
{
  uint32_t v = 0;
  for (int i = 0; i < nbits; ++i)
    v = v << 1 | uint32_t(code(BitModel::kOne / 2));
  return v;
}

double
shannon_bits(std::span<const int> bits)
{
  if (bits.empty())
    return 0;
  double ones = 0;
  for (int b : bits)
    ones += b != 0;
  double n = double(bits.size());
  double p = ones / n;
  if (p <= 0 || p >= 1)
    return 0;
  return -n * (p * std::log2(p) + (1 - p) * std::log2(1 - p));
}

}  // namespace spc
