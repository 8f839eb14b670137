#include <gtest/gtest.h>

#include "acrodis/error.h"
#include "acrodis/prompting.h"

using namespace acrodis;
using namespace acrodis::prompting;

TEST(Render, SinglePassWireFormat) {
  const Prompt p = render_single_pass("Elevated PT noted.");
  EXPECT_EQ(p.serialize(),
            R"({"Task":"Find the acronym in the text and expand the meaning of the acronym in the given text.",)"
            R"("Text":"Elevated PT noted.","Rules":["Output strict JSON on one line",)"
            R"("Use the keys acronym, expansion, confidence (a number from 0 to 1) and rationale"]})");
  EXPECT_EQ(p.kind(), PromptKind::single_pass);
  EXPECT_FALSE(p.acronym.has_value());
}

TEST(Render, CascadedExpansionCarriesAcronym) {
  const Prompt p = render_cascaded_expansion("Correlation of PT and famous face and voice recognition was performed.",
                                             "PT");
  EXPECT_EQ(p.task,
            "Read the input text carefully, understand the context and expand the meaning of the acronym in the "
            "given text.");
  EXPECT_EQ(p.acronym, "PT");
  EXPECT_EQ(p.rules.front(), kStrictJsonRule);
  const std::string wire = p.serialize();
  EXPECT_LT(wire.find("\"Text\""), wire.find("\"Acronym\""));
  EXPECT_LT(wire.find("\"Acronym\""), wire.find("\"Rules\""));
  EXPECT_EQ(p.kind(), PromptKind::expansion);
}

TEST(Render, RejectsBadInputs) {
  EXPECT_THROW(render_single_pass(""), DataError);
  EXPECT_THROW(render_single_pass("   "), DataError);
  EXPECT_THROW(render_cascaded_expansion("PT noted", ""), DataError);
  EXPECT_THROW(render_cascaded_expansion("PTT noted", "PT"), DataError);
}

TEST(Render, EscapingIsLossless) {
  const std::string text = "Quote \" backslash \\ tab\t newline\n unicode \xC3\xA9 control \x01 MS";
  const Prompt p = render_cascaded_expansion(text, "MS");
  const std::string wire = p.serialize();
  EXPECT_EQ(wire.find('\n'), std::string::npos);
  EXPECT_EQ(Prompt::parse(wire), p);
}

TEST(Render, DetectionAndAnnotationKinds) {
  EXPECT_EQ(render_cascaded_detection("ED and SP").kind(), PromptKind::detection);
  EXPECT_EQ(render_annotation("E=mc2").kind(), PromptKind::annotation);
  Prompt unknown{"other", "x", std::nullopt, {}};
  EXPECT_FALSE(unknown.kind().has_value());
  EXPECT_THROW(Prompt::parse("not json"), DataError);
  EXPECT_THROW(Prompt::parse(R"({"Text":"x"})"), DataError);
}

TEST(Parse, StrictExpansion) {
  const auto o = parse_output(
      R"({"acronym":"PT","expansion":"prothrombin time","confidence":0.9,"rationale":"lab value"})",
      Expected::expansion);
  EXPECT_EQ(o.status, ParseStatus::ok);
  ASSERT_NE(o.expansion(), nullptr);
  EXPECT_EQ(o.expansion()->acronym, "PT");
  EXPECT_EQ(o.expansion()->expansion, "prothrombin time");
  EXPECT_DOUBLE_EQ(*o.expansion()->confidence, 0.9);
  EXPECT_EQ(o.expansion()->rationale, "lab value");
}

TEST(Parse, FencedBlockIsRepaired) {
  const auto o = parse_output("Sure!\n```json\n{\"acronym\":\"MS\",\"expansion\":\"multiple sclerosis\"}\n```\n",
                              Expected::expansion);
  EXPECT_EQ(o.status, ParseStatus::repaired);
  EXPECT_EQ(o.expansion()->expansion, "multiple sclerosis");
  EXPECT_FALSE(o.expansion()->confidence.has_value());
}

TEST(Parse, EmbeddedObjectIsRepaired) {
  const auto o = parse_output(
      R"(**Analysis:** the answer is {"Acronym": "ED", "Expansion": "emergency department {ward}", "Confidence": "85%"} as shown.)",
      Expected::expansion);
  EXPECT_EQ(o.status, ParseStatus::repaired);
  EXPECT_EQ(o.expansion()->expansion, "emergency department {ward}");
  EXPECT_NEAR(*o.expansion()->confidence, 0.85, 1e-12);
}

TEST(Parse, ConfidenceClampSetsRepaired) {
  auto o = parse_output(R"({"acronym":"MS","expansion":"x","confidence":1.7})", Expected::expansion);
  EXPECT_EQ(o.status, ParseStatus::repaired);
  EXPECT_DOUBLE_EQ(*o.expansion()->confidence, 1.0);
  o = parse_output(R"({"acronym":"MS","expansion":"x","confidence":-3})", Expected::expansion);
  EXPECT_DOUBLE_EQ(*o.expansion()->confidence, 0.0);
  o = parse_output(R"({"acronym":"MS","expansion":"x","confidence":"high"})", Expected::expansion);
  EXPECT_FALSE(o.expansion()->confidence.has_value());
}

TEST(Parse, DetectionShapes) {
  auto o = parse_output(R"({"acronyms":["ED","SP","ED"]})", Expected::detection);
  EXPECT_EQ(o.status, ParseStatus::ok);
  EXPECT_EQ(o.detection()->acronyms, (std::vector<std::string>{"ED", "SP"}));
  o = parse_output(R"(["PT"])", Expected::detection);
  EXPECT_EQ(o.detection()->acronyms, (std::vector<std::string>{"PT"}));
  o = parse_output(R"(The acronyms are: {"acronyms": ["CT"]})", Expected::detection);
  EXPECT_EQ(o.status, ParseStatus::repaired);
  EXPECT_EQ(o.detection()->acronyms, (std::vector<std::string>{"CT"}));
}

TEST(Parse, BlockedAndFailures) {
  EXPECT_EQ(parse_output("", Expected::expansion).status, ParseStatus::blocked);
  EXPECT_EQ(parse_output("  \n ", Expected::expansion).status, ParseStatus::blocked);
  EXPECT_EQ(parse_output("null", Expected::expansion).status, ParseStatus::blocked);
  EXPECT_EQ(parse_output("I\xE2\x80\x99m sorry, I can\xE2\x80\x99t help with that.", Expected::expansion).status,
            ParseStatus::blocked);
  const auto f = parse_output("The acronym probably means something.", Expected::expansion);
  EXPECT_EQ(f.status, ParseStatus::parse_failure);
  EXPECT_FALSE(f.has_payload());
  EXPECT_EQ(f.raw, "The acronym probably means something.");
  EXPECT_EQ(parse_output(R"({"acronym":"MS"})", Expected::expansion).status, ParseStatus::parse_failure);
  EXPECT_EQ(parse_output("{broken", Expected::expansion).status, ParseStatus::parse_failure);
}

TEST(Parse, SerializedResultsRoundTrip) {
  const ExpansionResult e{"PT", "prothrombin time", 0.75, "coagulation \"panel\""};
  const auto o = parse_output(serialize(e), Expected::expansion);
  EXPECT_EQ(o.status, ParseStatus::ok);
  EXPECT_EQ(*o.expansion(), e);
  const DetectionResult d{{"ED", "SP"}};
  EXPECT_EQ(*parse_output(serialize(d), Expected::detection).detection(), d);
  EXPECT_EQ(serialize(e).find('\n'), std::string::npos);
}

TEST(Parse, PayloadJsonRoundTrip) {
  const Payload e = ExpansionResult{"MS", "multiple sclerosis", std::nullopt, ""};
  const Payload d = DetectionResult{{"MS"}};
  EXPECT_EQ(payload_from_json(payload_to_json(e)), e);
  EXPECT_EQ(payload_from_json(payload_to_json(d)), d);
  EXPECT_EQ(payload_from_json(payload_to_json(Payload{})), Payload{});
}

TEST(Parse, StatusNames) {
  for (auto s : {ParseStatus::ok, ParseStatus::repaired, ParseStatus::blocked, ParseStatus::parse_failure})
    EXPECT_EQ(parse_status_from_string(to_string(s)), s);
  EXPECT_THROW(parse_status_from_string("x"), DataError);
}
