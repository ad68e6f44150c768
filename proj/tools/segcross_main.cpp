// segcross CLI: binds the shared-library C API into reproducible workflows.
// Exit codes: 0 success, 1 user error (flags, files, endpoints), 2 internal.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segcross/segcross.h"

namespace {

struct Failure {
  int exit_code;
  std::string message;
};

void require(sx_status status, const std::string& what) {
  if (status == SX_OK) return;
  const int code = status == SX_ERR_INTERNAL ? 2 : 1;
  throw Failure{code, what + ": " + sx_status_name(status) + ": " + sx_last_error()};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{1, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{1, "cannot write " + path};
  out << text;
}

struct CorpusHandle {
  sx_corpus* ptr = nullptr;
  ~CorpusHandle() { sx_corpus_free(ptr); }
};

struct ModelHandle {
  sx_model* ptr = nullptr;
  ~ModelHandle() { sx_model_free(ptr); }
};

struct ChunksHandle {
  sx_chunk_list* ptr = nullptr;
  ~ChunksHandle() { sx_chunk_list_free(ptr); }
};

struct IndexHandle {
  sx_index* ptr = nullptr;
  ~IndexHandle() { sx_index_free(ptr); }
};

struct HitsHandle {
  sx_hits* ptr = nullptr;
  ~HitsHandle() { sx_hits_free(ptr); }
};

struct StringHandle {
  char* ptr = nullptr;
  ~StringHandle() { sx_string_free(ptr); }
};

std::vector<size_t> parse_size_list(const std::string& csv) {
  std::vector<size_t> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      values.push_back(static_cast<size_t>(std::stoull(item)));
    } catch (const std::exception&) {
      throw Failure{1, "bad length value '" + item + "' in --max-len"};
    }
  }
  return values;
}

int run(int argc, char** argv) {
  CLI::App app{"text semantic segmentation and retrieval chunking"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a segmentation model");
  std::string train_data, train_config, train_out;
  int64_t train_seed = -1;
  train->add_option("--data", train_data, "training corpus (JSONL)")->required();
  train->add_option("--config", train_config, "train config (JSON file)");
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--seed", train_seed, "seed override for all randomness");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate boundary metrics");
  std::string eval_data, eval_model;
  bool include_final = false;
  eval->add_option("--data", eval_data, "evaluation corpus (JSONL)")->required();
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  eval->add_flag("--include-final-boundary", include_final,
                 "count each document's final sentence");

  // segment
  auto* segment = app.add_subcommand("segment", "segment a raw text file");
  std::string seg_model, seg_input, seg_separator = "";
  segment->add_option("--model", seg_model, "checkpoint path")->required();
  segment->add_option("--input", seg_input, "plain-text document")->required();
  segment->add_option("--separator", seg_separator,
                      "newline | period | custom:<regex>");

  // chunk
  auto* chunk = app.add_subcommand("chunk", "split a document into retrieval chunks");
  std::string chunk_model, chunk_input;
  size_t max_chunk_chars = 2000, max_depth = 8;
  chunk->add_option("--model", chunk_model, "checkpoint path")->required();
  chunk->add_option("--input", chunk_input, "plain-text document")->required();
  chunk->add_option("--max-chunk-chars", max_chunk_chars, "emission threshold");
  chunk->add_option("--max-depth", max_depth, "recursion depth limit");

  // index
  auto* index = app.add_subcommand("index", "embed chunks into a retrieval index");
  std::string index_chunks, index_embedder = "hashed", index_out;
  size_t index_dim = 256;
  index->add_option("--chunks", index_chunks, "chunk list (JSONL from `chunk`)")
      ->required();
  index->add_option("--embedder", index_embedder, "hashed | external");
  index->add_option("--dim", index_dim, "embedding dimension");
  index->add_option("--out", index_out, "index output path")->required();

  // query
  auto* query = app.add_subcommand("query", "retrieve top-k chunks for a question");
  std::string query_index_path, query_question, query_template, query_endpoint;
  size_t top_k = 5;
  query->add_option("--index", query_index_path, "index path")->required();
  query->add_option("--question", query_question, "question text")->required();
  query->add_option("--top-k", top_k, "number of chunks");
  query->add_option("--template", query_template,
                    "prompt template with {context} and {question}");
  query->add_option("--complete-endpoint", query_endpoint,
                    "completion endpoint URL (or SEGCROSS_COMPLETE_URL)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "evaluate across max input lengths");
  std::string sweep_data, sweep_model, sweep_lens, sweep_out;
  sweep->add_option("--data", sweep_data, "evaluation corpus (JSONL)")->required();
  sweep->add_option("--model", sweep_model, "checkpoint path")->required();
  sweep->add_option("--max-len", sweep_lens, "comma-separated M values")->required();
  sweep->add_option("--out", sweep_out, "CSV output path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int synth_topics = 2, synth_docs = 0;
  uint64_t synth_seed = 42;
  std::string synth_out;
  synth->add_option("--topics", synth_topics, "topics per document");
  synth->add_option("--docs", synth_docs, "number of documents")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "JSONL output path")->required();

  // convert
  auto* convert = app.add_subcommand("convert", "convert external formats to JSONL");
  std::string convert_format, convert_input, convert_out;
  convert->add_option("--format", convert_format, "input format (wiki727k)")
      ->required();
  convert->add_option("--input", convert_input, "file or directory")->required();
  convert->add_option("--out", convert_out, "JSONL output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 1;
  }

  if (train->parsed()) {
    CorpusHandle corpus;
    require(sx_corpus_open_jsonl(train_data.c_str(), &corpus.ptr), train_data);
    std::string config_text;
    if (!train_config.empty()) config_text = read_text_file(train_config);
    ModelHandle model;
    StringHandle loss_csv;
    require(sx_train(corpus.ptr, config_text.c_str(), train_seed, &model.ptr,
                     &loss_csv.ptr),
            "train");
    require(sx_model_save(model.ptr, train_out.c_str()), train_out);
    std::cout << loss_csv.ptr << std::flush;
    return 0;
  }

  if (eval->parsed()) {
    CorpusHandle corpus;
    require(sx_corpus_open_jsonl(eval_data.c_str(), &corpus.ptr), eval_data);
    ModelHandle model;
    require(sx_model_open(eval_model.c_str(), &model.ptr), eval_model);
    sx_metrics metrics{};
    require(sx_evaluate(model.ptr, corpus.ptr, include_final ? 1 : 0, &metrics),
            "eval");
    std::printf("precision=%.6f, recall=%.6f, f1=%.6f\n", metrics.precision,
                metrics.recall, metrics.f1);
    return 0;
  }

  if (segment->parsed()) {
    ModelHandle model;
    require(sx_model_open(seg_model.c_str(), &model.ptr), seg_model);
    const std::string text = read_text_file(seg_input);
    const std::string doc_id = std::filesystem::path(seg_input).stem().string();
    StringHandle json;
    require(sx_segment_text(model.ptr, doc_id.c_str(), text.c_str(),
                            seg_separator.c_str(), &json.ptr),
            "segment");
    std::cout << json.ptr << "\n";
    return 0;
  }

  if (chunk->parsed()) {
    ModelHandle model;
    require(sx_model_open(chunk_model.c_str(), &model.ptr), chunk_model);
    const std::string text = read_text_file(chunk_input);
    ChunksHandle chunks;
    require(sx_chunk_text(model.ptr, text.c_str(), max_chunk_chars, max_depth,
                          &chunks.ptr),
            "chunk");
    StringHandle jsonl;
    require(sx_chunk_list_to_jsonl(chunks.ptr, &jsonl.ptr), "chunk");
    std::cout << jsonl.ptr << std::flush;
    return 0;
  }

  if (index->parsed()) {
    ChunksHandle chunks;
    require(sx_chunk_list_open_jsonl(index_chunks.c_str(), &chunks.ptr), index_chunks);
    IndexHandle idx;
    require(sx_index_build(chunks.ptr, index_embedder.c_str(), index_dim, 42,
                           nullptr, &idx.ptr),
            "index");
    require(sx_index_save(idx.ptr, index_out.c_str()), index_out);
    std::cout << "indexed " << sx_chunk_list_count(chunks.ptr) << " chunks\n";
    return 0;
  }

  if (query->parsed()) {
    IndexHandle idx;
    require(sx_index_open(query_index_path.c_str(), &idx.ptr), query_index_path);
    HitsHandle hits;
    require(sx_index_query(idx.ptr, query_question.c_str(), top_k, &hits.ptr),
            "query");
    for (size_t i = 0; i < sx_hits_count(hits.ptr); ++i)
      std::printf("chunk_id=%d score=%.6f\n", sx_hits_chunk_id(hits.ptr, i),
                  sx_hits_score(hits.ptr, i));
    const bool want_completion = query->count("--complete-endpoint") > 0;
    if (!query_template.empty() || want_completion) {
      const std::string tmpl = query_template.empty()
                                   ? std::string("{context}\n\nQuestion: {question}")
                                   : query_template;
      StringHandle prompt;
      require(sx_assemble_context(hits.ptr, tmpl.c_str(), query_question.c_str(),
                                  &prompt.ptr),
              "assemble");
      if (want_completion) {
        // An empty flag value falls back to SEGCROSS_COMPLETE_URL.
        StringHandle answer;
        require(sx_complete(prompt.ptr,
                            query_endpoint.empty() ? nullptr : query_endpoint.c_str(),
                            -1, -1, &answer.ptr),
                "complete");
        std::cout << "---\n" << answer.ptr << "\n";
      } else {
        std::cout << "---\n" << prompt.ptr << "\n";
      }
    }
    return 0;
  }

  if (sweep->parsed()) {
    CorpusHandle corpus;
    require(sx_corpus_open_jsonl(sweep_data.c_str(), &corpus.ptr), sweep_data);
    ModelHandle model;
    require(sx_model_open(sweep_model.c_str(), &model.ptr), sweep_model);
    const auto values = parse_size_list(sweep_lens);
    StringHandle csv;
    require(sx_sweep_eval(model.ptr, corpus.ptr, values.data(), values.size(), 0,
                          &csv.ptr),
            "sweep");
    write_text_file(sweep_out, csv.ptr);
    std::cout << csv.ptr;
    return 0;
  }

  if (synth->parsed()) {
    CorpusHandle corpus;
    require(sx_corpus_synth(synth_topics, synth_docs, synth_seed, &corpus.ptr),
            "synth");
    require(sx_corpus_write_jsonl(corpus.ptr, synth_out.c_str()), synth_out);
    std::cout << "wrote " << sx_corpus_doc_count(corpus.ptr) << " documents\n";
    return 0;
  }

  if (convert->parsed()) {
    if (convert_format != "wiki727k")
      throw Failure{1, "unknown convert format '" + convert_format + "'"};
    require(sx_convert_wiki727k(convert_input.c_str(), convert_out.c_str()),
            "convert");
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
