#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "rcn/random.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

// ---------------------------------------------------------------------------
// Set card game
// ---------------------------------------------------------------------------

struct SetCard {
  int color = 0, number = 0, shape = 0, fill = 0;  // each in {0, 1, 2}

  bool operator==(const SetCard&) const = default;
};

// all 81 cards; index encodes ((color*3+number)*3+shape)*3+fill
std::vector<SetCard> set_deck();
int card_index(const SetCard& c);

// each attribute all-same or all-different across the three cards
bool is_set(const SetCard& a, const SetCard& b, const SetCard& c);

using Triplet = std::array<int, 3>;  // ascending deck indices

// every set among the (81 choose 3) triplets, lexicographic
std::vector<Triplet> enumerate_sets();

enum class SplitPart { kTrain, kVal, kTest };
std::string split_part_name(SplitPart p);

// seeded shuffle of the 1080 sets into 756 / 162 / 162
struct SetSplit {
  std::vector<Triplet> train, val, test;
  std::uint64_t seed = 0;

  const std::vector<Triplet>& part(SplitPart p) const;
  bool contains(SplitPart p, const Triplet& t) const;

 private:
  friend SetSplit make_set_split(std::uint64_t seed);
  std::unordered_set<int> train_ids_, val_ids_, test_ids_;
};

SetSplit make_set_split(std::uint64_t seed);

// 12-dim one-hot blocks: color | number | shape | fill
std::vector<double> encode_card(const SetCard& c);

// every set contained in `hand` (as ascending positions into `hand`)
std::vector<Triplet> sets_in_hand(const std::vector<SetCard>& hand);

struct TaskInstance {
  Tensor objects;  // [n, d]
  int label = 0;
  std::string task;
  std::string split;
};

// Positive: plant a set from the split's partition and fill with distinct
// random cards, resampling until every set in the hand belongs to the split.
// Negative: distinct random cards with no set at all. Cards are shuffled into
// random positions; optional Gaussian perturbation of the one-hot encoding.
TaskInstance sample_set_instance(const SetSplit& split, SplitPart part, int n, Rng& rng,
                                 double noise_sigma = 0.0);

// the raw hand backing an instance, for oracle checks
struct SetHand {
  std::vector<SetCard> cards;
  int label = 0;
};
SetHand sample_set_hand(const SetSplit& split, SplitPart part, int n, Rng& rng);

// ---------------------------------------------------------------------------
// relational games over symbolic objects
// ---------------------------------------------------------------------------

// Named collection of random unit vectors; disjoint names give disjoint
// vocabularies for out-of-distribution evaluation.
struct Vocab {
  std::string name;
  int dim = 0;
  std::vector<std::vector<double>> symbols;

  static Vocab make(const std::string& name, int size, int dim, std::uint64_t seed);
};

enum class RelGame { kSame, kBetween, kOccurs, kXoccurs, kMatchPattern };
RelGame relgame_from_string(const std::string& s);
std::string relgame_to_string(RelGame g);

// 3x3 grid flattened row-major into 9 object slots; empty cells are zero
// vectors; positive/negative labels balanced by construction
TaskInstance gen_relgames(RelGame game, const Vocab& vocab, Rng& rng);

// source triplet plus two target triplets over disjoint symbols; label is the
// index (0 or 1) of the target sharing the source's equality pattern
TaskInstance gen_match_to_sample(const Vocab& vocab, Rng& rng);

// equality-partition signature of a length-3 row: AAA, AAB, ABA, ABB or ABC
enum class RowPattern { kAAA, kAAB, kABA, kABB, kABC };
RowPattern row_pattern(const std::vector<int>& symbol_ids);
std::string row_pattern_name(RowPattern p);

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string name = "set";  // set | relgames | match_to_sample
  int n = 5;                 // set hand size
  double noise_sigma = 0.0;
  std::uint64_t split_seed = 7;
  RelGame game = RelGame::kMatchPattern;
  std::string train_vocab = "pentominoes";
  std::string test_vocab = "hexominoes";
  int vocab_size = 16;
  int vocab_dim = 12;
  std::uint64_t vocab_seed = 5;

  int object_count() const;
  int object_dim() const;
  int n_classes() const { return 2; }
};

struct Dataset {
  std::vector<TaskInstance> instances;
  int n_objects = 0;
  int d = 0;
  int n_classes = 2;
  std::string task;
  std::string split;
};

// exactly reproducible from (spec, part, count, seed)
Dataset generate_dataset(const TaskSpec& spec, SplitPart part, int count, std::uint64_t seed);

}  // namespace rcn
