#pragma once

#include <array>
#include <string>

#include "rnnlab/rng.hpp"

namespace rnnlab {

// Deterministic filler prose for character-model runs: template sentences
// over small word banks, lowercase ASCII plus space, comma, period and
// newline. Synthesized on demand, so nothing copyrighted ships with the code
// and any byte budget is available.
inline std::string synth_text(std::uint64_t seed, std::size_t target_bytes) {
    static const std::array<const char*, 48> nouns{
        "river",  "mountain", "harbor",  "lantern", "garden", "engine",  "letter", "village",
        "forest", "captain",  "market",  "bridge",  "winter", "machine", "island", "library",
        "road",   "storm",    "teacher", "window",  "valley", "miller",  "stone",  "harvest",
        "sailor", "tower",    "meadow",  "clock",   "ship",   "farmer",  "song",   "shadow",
        "candle", "journey",  "doctor",  "field",   "city",   "child",   "horse",  "wagon",
        "dream",  "painter",  "school",  "barrel",  "orchard", "tailor", "evening", "morning"};
    static const std::array<const char*, 32> verbs{
        "crossed",  "watched",  "carried", "followed", "remembered", "painted", "repaired",
        "opened",   "closed",   "visited", "measured", "gathered",   "counted", "guarded",
        "built",    "found",    "lost",    "studied",  "planted",    "sold",    "bought",
        "wrote",    "read",     "cleaned", "filled",   "emptied",    "moved",   "kept",
        "answered", "promised", "reached", "left"};
    static const std::array<const char*, 24> adjectives{
        "old",   "quiet",  "bright", "narrow", "heavy", "early",  "late",   "green",
        "small", "large",  "cold",   "warm",   "long",  "broken", "steady", "pale",
        "dusty", "silent", "busy",   "empty",  "wide",  "tall",   "deep",   "plain"};
    static const std::array<const char*, 12> adverbs{
        "slowly", "quickly", "carefully", "often",   "rarely", "together",
        "alone",  "again",   "finally",   "quietly", "almost", "already"};
    static const std::array<const char*, 8> places{
        "by the sea",   "near the hill", "in the north", "past the gate",
        "at the corner", "on the shore", "under the elm", "along the wall"};

    SplitMix64 rng(seed);
    auto noun = [&] { return std::string(nouns[rng.below(nouns.size())]); };
    auto verb = [&] { return std::string(verbs[rng.below(verbs.size())]); };
    auto adj = [&] { return std::string(adjectives[rng.below(adjectives.size())]); };
    auto adv = [&] { return std::string(adverbs[rng.below(adverbs.size())]); };
    auto place = [&] { return std::string(places[rng.below(places.size())]); };

    std::string out;
    out.reserve(target_bytes + 128);
    std::size_t sentences_in_par = 0;
    while (out.size() < target_bytes) {
        std::string s;
        switch (rng.below(6)) {
            case 0: s = "the " + adj() + " " + noun() + " " + verb() + " the " + noun(); break;
            case 1: s = "a " + noun() + " " + verb() + " " + adv() + " " + place(); break;
            case 2: s = "the " + noun() + " and the " + noun() + " " + verb() + " " + place(); break;
            case 3: s = adv() + ", the " + noun() + " " + verb() + " a " + adj() + " " + noun(); break;
            case 4: s = "every " + noun() + " " + place() + " " + verb() + " the " + adj() + " " + noun(); break;
            default: s = "the " + noun() + " " + verb() + " " + adv() + " and " + verb() + " the " + noun(); break;
        }
        out += s;
        out += ". ";
        if (++sentences_in_par >= 6 + rng.below(5)) {
            out.back() = '\n';
            sentences_in_par = 0;
        }
    }
    out.resize(target_bytes);
    return out;
}

}  // namespace rnnlab
