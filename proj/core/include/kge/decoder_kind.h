#ifndef KGE_DECODER_KIND_H_
#define KGE_DECODER_KIND_H_

#include <string>
#include <string_view>

namespace kge {

enum class DecoderKind { kTwoMult, kTucker };

// Which encoder output row TwoMult scores with.
enum class DecodeFrom { kRelation, kSource };

std::string to_string(DecoderKind kind);
std::string to_string(DecodeFrom from);

// Accept "twomult" / "tucker" and "relation" / "source"; throw ParameterError
// listing the valid names otherwise.
DecoderKind parse_decoder_kind(std::string_view name);
DecodeFrom parse_decode_from(std::string_view name);

}  // namespace kge

#endif  // KGE_DECODER_KIND_H_
