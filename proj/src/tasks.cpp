#include "rcn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcn {

std::vector<SetCard> set_deck() {
  std::vector<SetCard> deck;
  deck.reserve(81);
  for (int c = 0; c < 3; ++c)
    for (int n = 0; n < 3; ++n)
      for (int s = 0; s < 3; ++s)
        for (int f = 0; f < 3; ++f) deck.push_back({c, n, s, f});
  return deck;
}

int card_index(const SetCard& c) {
  return ((c.color * 3 + c.number) * 3 + c.shape) * 3 + c.fill;
}

namespace {
bool attr_ok(int a, int b, int c) {
  return (a == b && b == c) || (a != b && a != c && b != c);
}
int triplet_id(const Triplet& t) { return (t[0] * 81 + t[1]) * 81 + t[2]; }

Triplet sorted_triplet(int a, int b, int c) {
  Triplet t = {a, b, c};
  std::sort(t.begin(), t.end());
  return t;
}
}  // namespace

bool is_set(const SetCard& a, const SetCard& b, const SetCard& c) {
  return attr_ok(a.color, b.color, c.color) && attr_ok(a.number, b.number, c.number) &&
         attr_ok(a.shape, b.shape, c.shape) && attr_ok(a.fill, b.fill, c.fill);
}

std::vector<Triplet> enumerate_sets() {
  const std::vector<SetCard> deck = set_deck();
  std::vector<Triplet> sets;
  for (int i = 0; i < 81; ++i)
    for (int j = i + 1; j < 81; ++j)
      for (int k = j + 1; k < 81; ++k)
        if (is_set(deck[static_cast<std::size_t>(i)], deck[static_cast<std::size_t>(j)],
                   deck[static_cast<std::size_t>(k)]))
          sets.push_back({i, j, k});
  return sets;
}

std::string split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::kTrain: return "train";
    case SplitPart::kVal: return "val";
    case SplitPart::kTest: return "test";
  }
  return "?";
}

const std::vector<Triplet>& SetSplit::part(SplitPart p) const {
  switch (p) {
    case SplitPart::kTrain: return train;
    case SplitPart::kVal: return val;
    case SplitPart::kTest: return test;
  }
  throw std::logic_error("unreachable");
}

bool SetSplit::contains(SplitPart p, const Triplet& t) const {
  const int id = triplet_id(t);
  switch (p) {
    case SplitPart::kTrain: return train_ids_.count(id) > 0;
    case SplitPart::kVal: return val_ids_.count(id) > 0;
    case SplitPart::kTest: return test_ids_.count(id) > 0;
  }
  return false;
}

SetSplit make_set_split(std::uint64_t seed) {
  std::vector<Triplet> sets = enumerate_sets();
  Rng rng(seed);
  for (std::size_t i = sets.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(sets[i - 1], sets[j]);
  }
  // 70 / 15 / 15, floors with the remainder assigned to train
  const std::size_t total = sets.size();
  const std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(total));
  const std::size_t n_test = n_val;
  const std::size_t n_train = total - n_val - n_test;

  SetSplit split;
  split.seed = seed;
  split.train.assign(sets.begin(), sets.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(sets.begin() + static_cast<std::ptrdiff_t>(n_train),
                   sets.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(sets.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), sets.end());
  for (const Triplet& t : split.train) split.train_ids_.insert(triplet_id(t));
  for (const Triplet& t : split.val) split.val_ids_.insert(triplet_id(t));
  for (const Triplet& t : split.test) split.test_ids_.insert(triplet_id(t));
  return split;
}

std::vector<double> encode_card(const SetCard& c) {
  std::vector<double> v(12, 0.0);
  v[static_cast<std::size_t>(c.color)] = 1.0;
  v[static_cast<std::size_t>(3 + c.number)] = 1.0;
  v[static_cast<std::size_t>(6 + c.shape)] = 1.0;
  v[static_cast<std::size_t>(9 + c.fill)] = 1.0;
  return v;
}

std::vector<Triplet> sets_in_hand(const std::vector<SetCard>& hand) {
  const int n = static_cast<int>(hand.size());
  std::vector<Triplet> found;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        if (is_set(hand[static_cast<std::size_t>(i)], hand[static_cast<std::size_t>(j)],
                   hand[static_cast<std::size_t>(k)]))
          found.push_back({i, j, k});
  return found;
}

namespace {

constexpr int kMaxSampleTries = 10000;

std::vector<int> sample_distinct_cards(int count, const std::vector<char>& taken, Rng& rng) {
  std::vector<char> used = taken;
  std::vector<int> out;
  while (static_cast<int>(out.size()) < count) {
    const int c = static_cast<int>(rng.uniform_int(81));
    if (used[static_cast<std::size_t>(c)]) continue;
    used[static_cast<std::size_t>(c)] = 1;
    out.push_back(c);
  }
  return out;
}

}  // namespace

SetHand sample_set_hand(const SetSplit& split, SplitPart part, int n, Rng& rng) {
  if (n <= 3) throw std::invalid_argument("set task: hand size must exceed 3");
  static const std::vector<SetCard> deck = set_deck();
  const std::vector<Triplet>& pool = split.part(part);

  SetHand hand;
  hand.label = rng.bernoulli(0.5) ? 1 : 0;
  for (int attempt = 0; attempt < kMaxSampleTries; ++attempt) {
    std::vector<int> ids;
    if (hand.label == 1) {
      const Triplet planted = pool[rng.uniform_int(pool.size())];
      std::vector<char> taken(81, 0);
      for (int c : planted) taken[static_cast<std::size_t>(c)] = 1;
      ids = {planted[0], planted[1], planted[2]};
      for (int c : sample_distinct_cards(n - 3, taken, rng)) ids.push_back(c);
    } else {
      ids = sample_distinct_cards(n, std::vector<char>(81, 0), rng);
    }

    std::vector<SetCard> cards;
    cards.reserve(ids.size());
    for (int c : ids) cards.push_back(deck[static_cast<std::size_t>(c)]);
    const std::vector<Triplet> found = sets_in_hand(cards);

    bool ok;
    if (hand.label == 1) {
      // every set in the hand (planted or accidental) must live in this split
      ok = !found.empty();
      for (const Triplet& f : found) {
        const Triplet t = sorted_triplet(ids[static_cast<std::size_t>(f[0])],
                                         ids[static_cast<std::size_t>(f[1])],
                                         ids[static_cast<std::size_t>(f[2])]);
        ok = ok && split.contains(part, t);
      }
    } else {
      ok = found.empty();
    }
    if (!ok) continue;

    // random positions so the planted triplet never leaks through slot order
    for (std::size_t i = cards.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_int(i);
      std::swap(cards[i - 1], cards[j]);
    }
    hand.cards = std::move(cards);
    return hand;
  }
  throw std::runtime_error("set task: rejection sampling exceeded " +
                           std::to_string(kMaxSampleTries) + " tries");
}

TaskInstance sample_set_instance(const SetSplit& split, SplitPart part, int n, Rng& rng,
                                 double noise_sigma) {
  const SetHand hand = sample_set_hand(split, part, n, rng);
  Tensor objects = make_tensor({n, 12}, false);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> enc = encode_card(hand.cards[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 12; ++j) {
      double v = enc[static_cast<std::size_t>(j)];
      if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
      objects.at({i, j}) = v;
    }
  }
  TaskInstance inst;
  inst.objects = objects;
  inst.label = hand.label;
  inst.task = "set";
  inst.split = split_part_name(part);
  return inst;
}

// ---------------------------------------------------------------------------
// relational games
// ---------------------------------------------------------------------------

Vocab Vocab::make(const std::string& name, int size, int dim, std::uint64_t seed) {
  Vocab v;
  v.name = name;
  v.dim = dim;
  Rng rng = Rng(seed).split(name);
  for (int i = 0; i < size; ++i) {
    std::vector<double> vec(static_cast<std::size_t>(dim));
    double norm2 = 0.0;
    for (double& x : vec) {
      x = rng.normal();
      norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : vec) x *= inv;
    v.symbols.push_back(std::move(vec));
  }
  return v;
}

RelGame relgame_from_string(const std::string& s) {
  if (s == "same") return RelGame::kSame;
  if (s == "between") return RelGame::kBetween;
  if (s == "occurs") return RelGame::kOccurs;
  if (s == "xoccurs") return RelGame::kXoccurs;
  if (s == "match_pattern") return RelGame::kMatchPattern;
  throw std::invalid_argument("unknown relational game: " + s);
}

std::string relgame_to_string(RelGame g) {
  switch (g) {
    case RelGame::kSame: return "same";
    case RelGame::kBetween: return "between";
    case RelGame::kOccurs: return "occurs";
    case RelGame::kXoccurs: return "xoccurs";
    case RelGame::kMatchPattern: return "match_pattern";
  }
  return "?";
}

RowPattern row_pattern(const std::vector<int>& ids) {
  if (ids.size() != 3) throw std::invalid_argument("row_pattern: expected 3 symbols");
  const bool ab = ids[0] == ids[1], ac = ids[0] == ids[2], bc = ids[1] == ids[2];
  if (ab && bc) return RowPattern::kAAA;
  if (ab) return RowPattern::kAAB;
  if (ac) return RowPattern::kABA;
  if (bc) return RowPattern::kABB;
  return RowPattern::kABC;
}

std::string row_pattern_name(RowPattern p) {
  switch (p) {
    case RowPattern::kAAA: return "AAA";
    case RowPattern::kAAB: return "AAB";
    case RowPattern::kABA: return "ABA";
    case RowPattern::kABB: return "ABB";
    case RowPattern::kABC: return "ABC";
  }
  return "?";
}

namespace {

int distinct_symbols_needed(RowPattern p) {
  switch (p) {
    case RowPattern::kAAA: return 1;
    case RowPattern::kAAB:
    case RowPattern::kABA:
    case RowPattern::kABB: return 2;
    case RowPattern::kABC: return 3;
  }
  return 3;
}

// instantiate a pattern with the given distinct symbol ids
std::vector<int> instantiate_pattern(RowPattern p, const std::vector<int>& sym) {
  switch (p) {
    case RowPattern::kAAA: return {sym[0], sym[0], sym[0]};
    case RowPattern::kAAB: return {sym[0], sym[0], sym[1]};
    case RowPattern::kABA: return {sym[0], sym[1], sym[0]};
    case RowPattern::kABB: return {sym[0], sym[1], sym[1]};
    case RowPattern::kABC: return {sym[0], sym[1], sym[2]};
  }
  return {};
}

std::vector<int> draw_distinct(int count, int vocab_size, Rng& rng,
                               const std::vector<int>& exclude = {}) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < count) {
    const int s = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab_size)));
    bool used = std::find(out.begin(), out.end(), s) != out.end() ||
                std::find(exclude.begin(), exclude.end(), s) != exclude.end();
    if (!used) out.push_back(s);
  }
  return out;
}

RowPattern random_pattern(Rng& rng) {
  return static_cast<RowPattern>(rng.uniform_int(5));
}

RowPattern random_other_pattern(RowPattern avoid, Rng& rng) {
  RowPattern p;
  do {
    p = random_pattern(rng);
  } while (p == avoid);
  return p;
}

Tensor grid_to_tensor(const std::vector<std::vector<double>>& slots, int dim) {
  Tensor t = Tensor::zeros({static_cast<int>(slots.size()), dim});
  for (std::size_t i = 0; i < slots.size(); ++i)
    for (int j = 0; j < dim; ++j)
      if (!slots[i].empty()) t.at({static_cast<int>(i), j}) = slots[i][static_cast<std::size_t>(j)];
  return t;
}

}  // namespace

TaskInstance gen_relgames(RelGame game, const Vocab& vocab, Rng& rng) {
  const int vs = static_cast<int>(vocab.symbols.size());
  const int need = game == RelGame::kMatchPattern ? 3 : (game == RelGame::kSame ? 2 : 4);
  if (vs < need)
    throw std::invalid_argument("relational games: vocabulary of " + std::to_string(vs) +
                                " symbols too small for " + relgame_to_string(game));

  std::vector<std::vector<double>> slots(9);
  const int label = rng.bernoulli(0.5) ? 1 : 0;
  auto sym = [&](int id) { return vocab.symbols[static_cast<std::size_t>(id)]; };

  switch (game) {
    case RelGame::kSame: {
      std::vector<int> cells = draw_distinct(2, 9, rng);
      if (label == 1) {
        const int s = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vs)));
        slots[static_cast<std::size_t>(cells[0])] = sym(s);
        slots[static_cast<std::size_t>(cells[1])] = sym(s);
      } else {
        std::vector<int> ss = draw_distinct(2, vs, rng);
        slots[static_cast<std::size_t>(cells[0])] = sym(ss[0]);
        slots[static_cast<std::size_t>(cells[1])] = sym(ss[1]);
      }
      break;
    }
    case RelGame::kBetween: {
      // one of the 6 grid lines: 3 rows then 3 columns
      const int line = static_cast<int>(rng.uniform_int(6));
      std::array<int, 3> cells{};
      if (line < 3)
        cells = {line * 3, line * 3 + 1, line * 3 + 2};
      else
        cells = {line - 3, line - 3 + 3, line - 3 + 6};
      const int mid = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vs)));
      if (label == 1) {
        const int outer = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vs)));
        slots[static_cast<std::size_t>(cells[0])] = sym(outer);
        slots[static_cast<std::size_t>(cells[2])] = sym(outer);
      } else {
        std::vector<int> outer = draw_distinct(2, vs, rng);
        slots[static_cast<std::size_t>(cells[0])] = sym(outer[0]);
        slots[static_cast<std::size_t>(cells[2])] = sym(outer[1]);
      }
      slots[static_cast<std::size_t>(cells[1])] = sym(mid);
      break;
    }
    case RelGame::kOccurs:
    case RelGame::kXoccurs: {
      const int top_cell = static_cast<int>(rng.uniform_int(3));
      const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vs)));
      int matches;
      if (game == RelGame::kOccurs) {
        matches = label == 1 ? 1 + static_cast<int>(rng.uniform_int(3)) : 0;
      } else {
        // exactly-one holds only for a single match; negatives get 0, 2 or 3
        const int negatives[3] = {0, 2, 3};
        matches = label == 1 ? 1 : negatives[rng.uniform_int(3)];
      }
      std::vector<int> bottom_cells = {6, 7, 8};
      for (std::size_t i = bottom_cells.size(); i > 1; --i)
        std::swap(bottom_cells[i - 1], bottom_cells[rng.uniform_int(i)]);
      slots[static_cast<std::size_t>(top_cell)] = sym(top);
      for (int b = 0; b < 3; ++b) {
        if (b < matches) {
          slots[static_cast<std::size_t>(bottom_cells[static_cast<std::size_t>(b)])] = sym(top);
        } else {
          const std::vector<int> other = draw_distinct(1, vs, rng, {top});
          slots[static_cast<std::size_t>(bottom_cells[static_cast<std::size_t>(b)])] = sym(other[0]);
        }
      }
      break;
    }
    case RelGame::kMatchPattern: {
      const RowPattern top = random_pattern(rng);
      const RowPattern bottom = label == 1 ? top : random_other_pattern(top, rng);
      const std::vector<int> top_ids =
          instantiate_pattern(top, draw_distinct(distinct_symbols_needed(top), vs, rng));
      const std::vector<int> bot_ids =
          instantiate_pattern(bottom, draw_distinct(distinct_symbols_needed(bottom), vs, rng));
      for (int c = 0; c < 3; ++c) {
        slots[static_cast<std::size_t>(c)] = sym(top_ids[static_cast<std::size_t>(c)]);
        slots[static_cast<std::size_t>(6 + c)] = sym(bot_ids[static_cast<std::size_t>(c)]);
      }
      break;
    }
  }

  TaskInstance inst;
  inst.objects = grid_to_tensor(slots, vocab.dim);
  inst.label = label;
  inst.task = relgame_to_string(game);
  return inst;
}

TaskInstance gen_match_to_sample(const Vocab& vocab, Rng& rng) {
  const int vs = static_cast<int>(vocab.symbols.size());
  if (vs < 9)
    throw std::invalid_argument("match-to-sample: needs at least 9 symbols, vocabulary has " +
                                std::to_string(vs));

  const RowPattern source_p = random_pattern(rng);
  const RowPattern other_p = random_other_pattern(source_p, rng);
  const int label = rng.bernoulli(0.5) ? 1 : 0;

  std::vector<int> used;
  auto draw_for = [&](RowPattern p) {
    std::vector<int> s = draw_distinct(distinct_symbols_needed(p), vs, rng, used);
    used.insert(used.end(), s.begin(), s.end());
    return instantiate_pattern(p, s);
  };

  const std::vector<int> source = draw_for(source_p);
  const std::vector<int> match = draw_for(source_p);
  const std::vector<int> distract = draw_for(other_p);

  std::vector<std::vector<double>> slots(9);
  auto place = [&](int base, const std::vector<int>& ids) {
    for (int c = 0; c < 3; ++c)
      slots[static_cast<std::size_t>(base + c)] =
          vocab.symbols[static_cast<std::size_t>(ids[static_cast<std::size_t>(c)])];
  };
  place(0, source);
  place(3, label == 0 ? match : distract);
  place(6, label == 0 ? distract : match);

  TaskInstance inst;
  inst.objects = grid_to_tensor(slots, vocab.dim);
  inst.label = label;
  inst.task = "match_to_sample";
  return inst;
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

int TaskSpec::object_count() const { return name == "set" ? n : 9; }
int TaskSpec::object_dim() const { return name == "set" ? 12 : vocab_dim; }

Dataset generate_dataset(const TaskSpec& spec, SplitPart part, int count, std::uint64_t seed) {
  Dataset ds;
  ds.n_objects = spec.object_count();
  ds.d = spec.object_dim();
  ds.n_classes = spec.n_classes();
  ds.split = split_part_name(part);
  Rng rng = Rng(seed).split(split_part_name(part));

  if (spec.name == "set") {
    ds.task = "set";
    const SetSplit split = make_set_split(spec.split_seed);
    for (int i = 0; i < count; ++i)
      ds.instances.push_back(sample_set_instance(split, part, spec.n, rng, spec.noise_sigma));
  } else if (spec.name == "relgames") {
    ds.task = relgame_to_string(spec.game);
    // validation stays in-vocabulary; the test part swaps vocabularies
    const std::string vocab_name = part == SplitPart::kTest ? spec.test_vocab : spec.train_vocab;
    const Vocab vocab = Vocab::make(vocab_name, spec.vocab_size, spec.vocab_dim, spec.vocab_seed);
    for (int i = 0; i < count; ++i) ds.instances.push_back(gen_relgames(spec.game, vocab, rng));
  } else if (spec.name == "match_to_sample") {
    ds.task = "match_to_sample";
    const std::string vocab_name = part == SplitPart::kTest ? spec.test_vocab : spec.train_vocab;
    const Vocab vocab = Vocab::make(vocab_name, spec.vocab_size, spec.vocab_dim, spec.vocab_seed);
    for (int i = 0; i < count; ++i) ds.instances.push_back(gen_match_to_sample(vocab, rng));
  } else {
    throw std::invalid_argument("unknown task: " + spec.name);
  }
  for (TaskInstance& inst : ds.instances) inst.split = ds.split;
  return ds;
}

}  // namespace rcn
