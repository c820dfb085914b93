#!/usr/bin/env python3
"""Writes the scripted mock fixtures for the end-to-end tests.

Twenty seeds on unrelated topics. Seeds 0 and 1 fail verification, seeds 18
and 19 refine to the same question (the dedup judge confirms it), and for one
question resolver C disagrees with A and B so a single tiebreak is needed.
Run from this directory: python3 make_mock.py
"""
import json

TOPICS = [
    ("glacier", "Will the Pasterze glacier retreat monitoring station report melt exceeding forty metres", "Alpine glaciologists track annual retreat of the Pasterze tongue."),
    ("volcano", "Will Kilauea volcano observatory raise the aviation colour code to red", "Hawaiian volcanologists publish eruption alerts for Kilauea summit activity."),
    ("chess", "Will Magnus Carlsen win the Tata Steel chess tournament in Wijk aan Zee", "Grandmasters gather annually in Wijk aan Zee for classical chess."),
    ("wheat", "Will Kansas winter wheat futures settle above seven dollars per bushel", "Grain traders watch Kansas hard red winter wheat contracts."),
    ("satellite", "Will SpaceX launch a Starlink batch from Vandenberg carrying more than twenty satellites", "Falcon rockets deploy Starlink constellations from California launchpads."),
    ("opera", "Will La Scala premiere a new Verdi production with sold out tickets", "Milan audiences attend opera seasons at Teatro alla Scala."),
    ("rugby", "Will Ireland win the Six Nations rugby championship grand slam", "Rugby unions from Europe compete in the Six Nations tournament."),
    ("copper", "Will London Metal Exchange copper prices close above ten thousand dollars per tonne", "Smelters and miners follow LME copper benchmark quotations."),
    ("measles", "Will Texas health officials report more than fifty measles cases in Gaines county", "Epidemiologists monitor measles outbreaks among unvaccinated communities."),
    ("bridge", "Will the Fehmarnbelt tunnel construction consortium announce immersion of element ten", "Danish and German engineers build the Fehmarnbelt immersed tunnel."),
    ("coffee", "Will arabica coffee futures in New York trade above four dollars per pound", "Brazilian harvest forecasts drive arabica bean futures."),
    ("marathon", "Will a runner break two hours five minutes at the Tokyo marathon", "Elite distance athletes race the Tokyo marathon course each spring."),
    ("telescope", "Will the Vera Rubin observatory release its first public sky survey images", "Astronomers in Chile commission the Rubin survey camera."),
    ("salmon", "Will Norwegian aquaculture exports of farmed salmon exceed ten billion kroner monthly", "Fish farmers in Norway report seafood export statistics."),
    ("cricket", "Will India win the Champions Trophy cricket final in Dubai", "National cricket teams contest the Champions Trophy limited overs event."),
    ("lithium", "Will Chilean lithium carbonate spot prices rise above twelve thousand dollars", "Battery makers source lithium brine from the Atacama salt flats."),
    ("orchestra", "Will the Berlin Philharmonic announce a new chief conductor appointment", "Symphony musicians vote on conductors for the Berliner Philharmoniker."),
    ("typhoon", "Will the Philippine weather agency name more than three typhoons", "PAGASA forecasters assign local names to tropical cyclones."),
    ("vaccine", "Will regulators approve the updated dengue vaccine for travellers", "Pharmaceutical firms seek licensing of dengue immunisation shots."),
    ("vaccine-dup", "Will authorities license the revised dengue shot for tourists", "Drug companies pursue approval of new dengue jabs."),
]
DUP_TITLE = "Will the updated dengue vaccine be approved for travellers by March 2025?"
DUP_BACKGROUND = "Pharmaceutical firms seek licensing of dengue immunisation shots for international travellers."
FAIL_VERIFY = {0, 1}
DISAGREE = 5          # resolver C dissents on this question
SUBQ_DECOMPOSE = True


def toml_str(s):
    return json.dumps(s)


def rule(template, text, match=(), backend=None, steps=()):
    out = ["[[response]]", f"template = {toml_str(template)}"]
    if backend:
        out.append(f"backend = {toml_str(backend)}")
    if match:
        out.append("match = [" + ", ".join(toml_str(m) for m in match) + "]")
    if steps:
        out.append("steps = [" + ", ".join(toml_str(s) for s in steps) + "]")
    out.append(f"text = {toml_str(text)}")
    return "\n".join(out) + "\n"


def refined(i):
    if i in (18, 19):
        return DUP_TITLE, DUP_BACKGROUND
    _, proto, bg = TOPICS[i]
    return f"{proto} by March 2025?", bg


def main():
    seeds, rules = [], []
    for i, (slug, proto, bg) in enumerate(TOPICS):
        marker = f"SEED-{i:02d}"
        seeds.append({"content": f"{marker}\n\n{bg} Reporters covered the {slug} story in depth.", "url": f"https://news.example/{slug}"})
        rules.append(rule("proto_generation", f"QUESTION: {proto}?\nRATIONALE: The {slug} story has a dated outcome.", match=[marker]))
        title, background = refined(i)
        rules.append(rule("refinement", "\n".join([
            f"title: {title}",
            f"background: {background}",
            "resolution_criteria: Resolves YES if reputable reporting confirms the event inside the window.",
            "window_start: 2025-01-10",
            "window_end: 2025-03-15",
        ]), match=[proto + "?"]))
    for i in sorted(FAIL_VERIFY):
        title, _ = refined(i)
        rules.append(rule("quality", "rationale_quality: Too vague.\nfinal_answer_quality: bad", match=[title]))
    rules.append(rule("background_research", "Nothing further of note."))
    rules.append(rule("quality", "rationale_quality: Clear and specific.\nfinal_answer_quality: great"))
    rules.append(rule("ambiguity", "rationale_ambiguity: Unambiguous.\nfinal_answer_ambiguity: great"))
    rules.append(rule("resolvability", "rationale_resolvability: Public records exist.\nfinal_answer_resolvability: very certainly yes"))
    rules.append(rule("forecast_verifier", "rationale_forecast: Uncertain.\nfinal_answer_forecast: 40"))

    rules.append(rule("deduplication", "Both ask the same thing.\nduplicate: yes", match=[DUP_TITLE]))
    rules.append(rule("deduplication", "Different events.\nduplicate: no"))
    rules.append(rule("topic_label", "label: Current affairs"))
    rules.append(rule("similarity", "similarity: 1"))

    rules.append(rule("research", "Summary: recent reporting is mixed.",
                      steps=["Thought: look for news\nAction: web_search\nAction Input: latest news"]))
    for i in range(20):
        title, _ = refined(i)
        p = 10 + 4 * i
        rules.append(rule("forecast", f"Weighing the evidence.\nfinal_answer_forecast: {p}", match=[title]))
    rules.append(rule("forecast", "final_answer_forecast: 50"))
    rules.append(rule("decomposition", "\n".join([
        "SUBQUESTION: Will the responsible agency publish an official statement before February?",
        "BACKGROUND: Official statements usually precede the main event.",
        "RESOLUTION_CRITERIA: Resolves YES if a statement appears on the agency website.",
        "SUBQUESTION: Will major newspapers report preparatory steps in January?",
        "BACKGROUND: Preparatory steps are widely covered.",
        "RESOLUTION_CRITERIA: Resolves YES if two national newspapers report them.",
    ])))
    rules.append(rule("subquestion_forecast", "Combining the subforecasts.\nfinal_answer_forecast: 45"))

    for i in range(20):
        title, _ = refined(i)
        yes = i % 3 == 0
        v, other = ("True", "False") if yes else ("False", "True")
        body = f"resolution: {v}\nresolution_derivation: Reporting confirms the outcome."
        rules.append(rule("resolution_v1", body, match=[title]))
        rules.append(rule("resolution_v2", body + "\nresolution_weaknesses: None found.", match=[title]))
        if i == DISAGREE:
            rules.append(rule("resolution_v2", f"resolution: {other}\nresolution_derivation: A different reading.\nresolution_weaknesses: Sparse sources.",
                              match=[title], backend="mock_c"))

    tools = ['[[tool]]\naction = "web_search"\ntext = "1. Example News: developments continue as expected."\n',
             '[[tool]]\naction = "read_url"\ntext = "The article describes ongoing developments."\n']
    with open("mock.toml", "w") as f:
        f.write("# Generated by make_mock.py\n\n" + "\n".join(rules + tools))
    with open("seeds.jsonl", "w") as f:
        for s in seeds:
            f.write(json.dumps(s) + "\n")


if __name__ == "__main__":
    main()
