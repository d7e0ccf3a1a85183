#!/usr/bin/env python3
"""Writes the synthetic benchmark under assets/mock_suite.

Every world is a tabulated video: per-frame captions, detections, yes/no
predicates, question answers and scripted language-model replies. Each
question ships with a fixture program; the expected answer follows from the
tables, so the suite scores 100% when the engine behaves as documented.

Run from the repository root: python3 scripts/gen_mock_suite.py
"""

import json
import math
import random
import shutil
import string
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "assets" / "mock_suite"


def rbox(x, y, w, h):
    return {"x1": round(x, 4), "y1": round(y, 4), "x2": round(x + w, 4), "y2": round(y + h, 4)}


class World:
    def __init__(self, video_id, fps, n, caption):
        self.video_id = video_id
        self.fps = fps
        self.n = n
        self.transcript = None
        self.frames = [
            {"index": i, "caption": caption(i) if callable(caption) else caption,
             "objects": {}, "predicates": {}, "qa": {}, "region_qa": []}
            for i in range(n)
        ]
        self.llm = []
        self.chunks = None

    def predicate(self, question, frames_true):
        for f in self.frames:
            f["predicates"][question] = f["index"] in frames_true

    def qa(self, question, answer):
        for f in self.frames:
            f["qa"][question] = answer(f["index"]) if callable(answer) else answer

    def obj(self, name, frames, box, score=0.9, region_qa=None):
        """Adds one instance of `name` in `frames`; `box(i)` gives its box."""
        for i in frames:
            b = box(i)
            self.frames[i]["objects"].setdefault(name, []).append(dict(b, score=score))
            if region_qa:
                qa = {q: (a(i) if callable(a) else a) for q, a in region_qa.items()}
                self.frames[i]["region_qa"].append({"box": b, "qa": qa})

    def chunk_captions(self, caption):
        per = self.fps  # integer frame rates only: one-second chunks
        k = math.ceil(self.n / per)
        self.chunks = [
            {"start_frame": c * per, "end_frame": min((c + 1) * per, self.n), "caption": caption(c)}
            for c in range(k)
        ]

    def rule(self, contains, response):
        self.llm.append({"contains": contains, "response": response})

    def to_json(self):
        frames = []
        for f in self.frames:
            g = {"index": f["index"], "caption": f["caption"]}
            for key in ("objects", "predicates", "qa", "region_qa"):
                if f[key]:
                    g[key] = f[key]
            frames.append(g)
        w = {"video_id": self.video_id, "fps": self.fps, "frame_count": self.n, "frames": frames}
        if self.transcript:
            w["transcript"] = self.transcript
        if self.chunks:
            w["chunk_captions"] = self.chunks
        if self.llm:
            w["llm"] = self.llm
        return w


HEAD = "def answer_question(video, possible_answers):\n"
QUESTIONS = []


def q(qid, world, question, qtype, answer, program, options=None):
    rec = {"question_id": qid, "video_id": world.video_id, "question": question}
    if qtype:
        rec["type"] = qtype
    if options:
        assert len(options) == 5 and answer in options
        rec["options"] = options
    rec["answers"] = [answer]
    body = program.strip("\n")
    QUESTIONS.append((rec, HEAD + "\n".join("    " + l for l in body.splitlines()) + "\n"))


def mc_rule(world, key, options, answer, reason):
    world.rule([key], f"{options.index(answer) + 1}. {reason}")


# --- ski slope -------------------------------------------------------------

ski = World("ski_slope", 1, 12, lambda i: "a skier going down a snowy slope" if 2 <= i <= 9 else "an empty snowy slope with pine trees")
skier_frames = range(2, 10)
skier_box = lambda i: rbox(0.1 + 0.05 * (i - 2), 0.3, 0.15, 0.4)
jacket_box = lambda i: rbox(0.12 + 0.05 * (i - 2), 0.35, 0.1, 0.12)
ski.obj("skier", skier_frames, skier_box, 0.92,
        {"What is this person doing?": lambda i: "skiing" if i < 8 else "standing"})
ski.obj("jacket", skier_frames, jacket_box, 0.85, {"What color is this jacket?": "black"})
ski.obj("tree", range(12), lambda i: rbox(0.8, 0.1, 0.1, 0.5), 0.8)
ski.predicate("Is it snowing?", set(range(0, 6)))
ski.qa("What is the weather like?", lambda i: "snowy" if i < 6 else "sunny")

q("ski_color", ski, "What color is the skier's jacket?", "color", "black", """
skier_clip = video.filter_object("skier")
skier_boxes = video.find("skier")
jacket_boxes = skier_clip.find("jacket")
responses = jacket_boxes.video_query("What color is this jacket?", possible_answers)
return get_max_key(responses)
""")
q("ski_count", ski, "How many skiers are on the slope?", "count", "1", """
skier_tracks = video.track_objects("skier")
return len(skier_tracks)
""")
q("ski_action", ski, "What is the person on the slope doing?", "action", "skiing", """
skier_boxes = video.find("skier")
responses = skier_boxes.video_query("What is this person doing?", possible_answers)
return get_max_key(responses)
""")
q("ski_weather", ski, "What is the weather like at the start of the video?", "weather", "snowy", """
start_clip = video.trim(0, video.num_frames // 2)
responses = start_clip.video_query("What is the weather like?", possible_answers)
return get_max_key(responses)
""")
ski_opts = ["the snow starts falling harder", "a tree blocks the path", "the skier reaches the bottom of the slope",
            "the skier drops a pole", "another skier crashes into them"]
mc_rule(ski, "why does the skier stop at the end of the video?", ski_opts, ski_opts[2],
        "The caption shows the skier standing at the bottom of the run.")
q("ski_why", ski, "Why does the skier stop at the end of the video?", "why", ski_opts[2], """
end_clip = video.trim(video.num_frames // 2, video.num_frames)
skier_clip = end_clip.filter_object("skier")
caption = skier_clip.get_caption(skier_clip.num_frames - 1)
context = {"caption": caption}
answer = skier_clip.choose_option("why does the skier stop at the end of the video?", context, possible_answers)
return answer
""", ski_opts)

# --- kitchen -----------------------------------------------------------------

def kitchen_caption(i):
    if i < 4:
        return "a person washing carrots in the sink"
    if i < 12:
        return "a person cutting carrots on a cutting board"
    return "a person stirring a pot on the stove"


kit = World("kitchen", 2, 20, kitchen_caption)
kit.transcript = "first we chop the carrots nice and thin, then we fry them in the pot with some garlic"
kit.predicate("Is someone cutting vegetables?", set(range(4, 12)))
kit.predicate("Is the stove on?", set(range(10, 20)))
kit.qa("What is the person holding?", lambda i: "knife" if 4 <= i < 12 else ("carrot" if i < 4 else "spoon"))
kit.qa("What room is this?", "kitchen")
kit.qa("What is on the cutting board?", lambda i: "carrot" if i < 12 else "nothing")
kit.qa("What is the person doing?", lambda i: "washing" if i < 4 else ("cutting" if i < 12 else "cooking"))
kit.obj("person", range(20), lambda i: rbox(0.3, 0.1, 0.3, 0.8), 0.95)
kit.obj("knife", range(4, 12), lambda i: rbox(0.45 + 0.002 * i, 0.55, 0.1, 0.04), 0.88)
kit.obj("pot", range(12, 20), lambda i: rbox(0.6, 0.5, 0.2, 0.15), 0.9)
kit.chunk_captions(lambda c: ["someone rinses carrots under the tap", "someone rinses carrots under the tap",
                              "someone slices carrots on a board", "someone slices carrots on a board",
                              "someone slices carrots on a board", "someone slices carrots on a board",
                              "someone puts the carrots into a pot", "someone stirs the pot",
                              "someone stirs the pot", "someone tastes the food"][c])
kit.rule(["Paragraph:"], "A person washes carrots, slices them on a board, and then cooks them in a pot on the stove, tasting the food at the end.")

q("kit_holding", kit, "What is the person holding while cutting vegetables?", "object", "knife", """
cutting_clip = video.filter_property("Is someone cutting vegetables?")
responses = cutting_clip.video_query("What is the person holding?", possible_answers)
return get_max_key(responses)
""")
q("kit_where", kit, "Where is this video taking place?", "location", "kitchen", """
responses = video.video_query("What room is this?", possible_answers)
return get_max_key(responses)
""")
q("kit_board", kit, "What is on the cutting board?", "object", "carrot", """
board_clip = video.filter_property("Is someone cutting vegetables?")
responses = board_clip.video_query("What is on the cutting board?", possible_answers)
return get_max_key(responses)
""")
q("kit_knives", kit, "How many knives does the person use?", "count", "1", """
knife_tracks = video.track_objects("knife")
return len(knife_tracks)
""")
q("kit_after", kit, "What is the person doing once the stove is on?", "action", "cooking", """
stove_clip = video.filter_property("Is the stove on?")
responses = stove_clip.video_query("What is the person doing?", possible_answers)
return get_max_key(responses)
""")
kit_opts = ["onion", "garlic", "butter", "ginger", "pepper"]
mc_rule(kit, "which ingredient is cooked with the carrots?", kit_opts, "garlic", "The speaker says they fry the carrots with garlic.")
q("kit_ingredient", kit, "Which ingredient is cooked together with the carrots?", "what", "garlic", """
script = video.get_script()
context = {"script": script}
answer = video.choose_option("which ingredient is cooked with the carrots?", context, possible_answers)
return answer
""", kit_opts)
kit_goal = ["cleaning the kitchen", "preparing a carrot dish", "baking bread", "washing the dishes", "repairing the stove"]
mc_rule(kit, "what is the overall goal of the person?", kit_goal, kit_goal[1], "The summary describes washing, slicing and cooking carrots.")
q("kit_goal", kit, "What is the overall goal of the person in the video?", "summary", kit_goal[1], """
summary = video.get_summary()
context = {"summary": summary}
answer = video.choose_option("what is the overall goal of the person?", context, possible_answers)
return answer
""", kit_goal)

# --- dog park ----------------------------------------------------------------

dog = World("dog_park", 1, 16, lambda i: "a brown dog running on the grass with a ball" if 3 <= i <= 8 else (
    "a brown dog lying on the grass" if i >= 10 else "a brown dog running in a park"))
dog_a = lambda i: rbox(0.05 + 0.03 * min(i, 10), 0.5, 0.15, 0.15)
dog_b = lambda i: rbox(0.75, 0.2, 0.12, 0.12)
dog.obj("dog", range(16), dog_a, 0.93, {"What color is this dog?": "brown"})
dog.obj("dog", range(4, 16), dog_b, 0.81, {"What color is this dog?": "white"})
dog.obj("ball", range(3, 9), lambda i: rbox(0.12 + 0.03 * i, 0.52, 0.04, 0.04), 0.7)
dog.predicate("Is the dog carrying something?", set(range(3, 9)))
dog.qa("What is the dog carrying?", lambda i: "ball" if 3 <= i <= 8 else "nothing")
dog.qa("What is the dog doing?", lambda i: "running" if i < 10 else "lying down")

q("dog_carry", dog, "What is the dog carrying?", "object", "ball", """
carrying_clip = video.filter_property("Is the dog carrying something?")
responses = carrying_clip.video_query("What is the dog carrying?", possible_answers)
return get_max_key(responses)
""")
q("dog_color", dog, "What color is the dog that runs?", "color", "brown", """
dog_boxes = video.find("dog")
responses = dog_boxes.video_query("What color is this dog?", possible_answers)
return get_max_key(responses)
""")
q("dog_count", dog, "How many dogs are in the park?", "count", "2", """
dog_tracks = video.track_objects("dog")
return len(dog_tracks)
""")
q("dog_end", dog, "What does the dog do at the end of the video?", "action", "lying down", """
end_clip = video.trim(video.num_frames // 2, video.num_frames)
responses = end_clip.video_query("What is the dog doing?", possible_answers)
return get_max_key(responses)
""")
dog_opts = ["it sees a cat", "its owner calls it", "it gets tired and lies down", "the ball goes into a pond", "it starts to rain"]
mc_rule(dog, "why does the dog stop running?", dog_opts, dog_opts[2], "In the last frames the dog is lying on the grass.")
q("dog_why", dog, "Why does the dog stop running?", "why", dog_opts[2], """
last_clip = video.trim(video.num_frames - 4, video.num_frames)
caption = last_clip.get_caption(0)
activity = last_clip.video_query("What is the dog doing?", possible_answers)
context = {"caption": caption, "activity": activity}
answer = last_clip.choose_option("why does the dog stop running?", context, possible_answers)
return answer
""", dog_opts)

# --- party -------------------------------------------------------------------

party = World("party", 1, 14, lambda i: "a living room with a sofa" if i < 3 else (
    "people singing around a cake with candles" if 6 <= i <= 9 else "people talking in a room with balloons"))
party.predicate("Is a party happening?", set(range(3, 13)))
party.qa("What is the party for?", lambda i: "birthday" if 3 <= i <= 12 else "nothing")
party.qa("What dessert is on the table?", lambda i: "cake" if 6 <= i <= 9 else "nothing")
party.qa("What are the people doing?", lambda i: "clapping" if 6 <= i <= 9 else "talking")
party.obj("cake", range(6, 10), lambda i: rbox(0.4, 0.6, 0.2, 0.15), 0.9)
for b, x in enumerate([0.05, 0.4, 0.75]):
    party.obj("balloon", range(3, 13), lambda i, x=x: rbox(x, 0.05, 0.1, 0.15), 0.85 - 0.02 * b)

q("party_for", party, "What is the party for?", "reason", "birthday", """
party_segment = video.filter_property("Is a party happening?")
responses = party_segment.video_query("What is the party for?", possible_answers)
return get_max_key(responses)
""")
q("party_dessert", party, "What dessert is served at the party?", "object", "cake", """
cake_clip = video.filter_object("cake")
responses = cake_clip.video_query("What dessert is on the table?", possible_answers)
return get_max_key(responses)
""")
q("party_balloons", party, "How many balloons are there?", "count", "3", """
balloon_tracks = video.track_objects("balloon")
return len(balloon_tracks)
""")
q("party_first", party, "What piece of furniture is seen first?", "object", "sofa", """
caption = video.get_caption(0)
return caption
""")
party_opts = ["they leave the room", "they clap and sing", "they start dancing", "they turn off the lights", "they open presents"]
mc_rule(party, "how do the guests react when the cake arrives?", party_opts, party_opts[1], "While the cake is on the table the guests are clapping.")
q("party_react", party, "How do the guests react when the cake arrives?", "how", party_opts[1], """
cake_clip = video.filter_object("cake")
caption = cake_clip.get_caption(cake_clip.num_frames // 2)
activity = cake_clip.video_query("What are the people doing?", possible_answers)
context = {"caption": caption, "activity": activity}
answer = cake_clip.choose_option("how do the guests react when the cake arrives?", context, possible_answers)
return answer
""", party_opts)

# --- street ------------------------------------------------------------------

street = World("street", 2, 24, lambda i: "a white truck on a city street" if 10 <= i <= 17 else "cars driving on a city street")
street.obj("car", range(24), lambda i: rbox(0.02 + 0.02 * i, 0.6, 0.12, 0.08), 0.91, {"What color is this car?": "red"})
street.obj("car", range(16), lambda i: rbox(0.8 - 0.02 * i, 0.3, 0.12, 0.08), 0.84, {"What color is this car?": "blue"})
street.obj("truck", range(10, 18), lambda i: rbox(0.4, 0.4, 0.25, 0.15), 0.88)
street.obj("bicycle", range(0, 6), lambda i: rbox(0.1, 0.75, 0.06, 0.08), 0.76)
street.predicate("Is the traffic light red?", set(range(8, 16)))
street.qa("What is crossing the street?", lambda i: "pedestrian" if 8 <= i < 16 else "nothing")

q("street_color", street, "What color is the car?", "color", "red", """
car_boxes = video.find("car")
responses = car_boxes.video_query("What color is this car?", possible_answers)
return get_max_key(responses)
""")
q("street_cars", street, "How many cars drive by?", "count", "2", """
car_tracks = video.track_objects("car")
return len(car_tracks)
""")
q("street_crossing", street, "What crosses the street while the light is red?", "object", "pedestrian", """
red_clip = video.filter_property("Is the traffic light red?")
responses = red_clip.video_query("What is crossing the street?", possible_answers)
return get_max_key(responses)
""")
q("street_vehicle", street, "What large vehicle appears in the video?", "object", "truck", """
truck_clip = video.filter_object("truck")
caption = truck_clip.get_caption(0)
return caption
""")
q("street_bicycle", street, "Is there a bicycle in the video?", "yesno", "yes", """
bike_clip = video.filter_object("bicycle")
if bike_clip.num_frames > 0:
    return "yes"
return "no"
""")
street_opts = ["the cars speed up", "a pedestrian crosses the street", "a truck parks on the sidewalk", "a bus arrives", "the street lights turn on"]
mc_rule(street, "what happens when the light turns red?", street_opts, street_opts[1], "During the red light someone is crossing.")
q("street_red", street, "What happens when the traffic light turns red?", "what", street_opts[1], """
red_clip = video.filter_property("Is the traffic light red?")
activity = red_clip.video_query("What is crossing the street?", possible_answers)
context = {"crossing": activity}
answer = red_clip.choose_option("what happens when the light turns red?", context, possible_answers)
return answer
""", street_opts)

# --- lecture -----------------------------------------------------------------

lec = World("lecture", 1, 10, lambda i: "a teacher pointing at a whiteboard" if i >= 5 else "a teacher standing next to a laptop")
lec.transcript = "good morning everyone, today we are going to learn how plants turn sunlight into energy through photosynthesis"
lec.qa("What is the person pointing at?", lambda i: "whiteboard" if i >= 5 else "laptop")
lec.obj("person", range(10), lambda i: rbox(0.35 + 0.01 * i, 0.2, 0.2, 0.7), 0.94)
lec.obj("laptop", range(0, 5), lambda i: rbox(0.1, 0.6, 0.15, 0.1), 0.86)

lec_topic = ["volcanoes", "the solar system", "photosynthesis", "world war two", "fractions"]
mc_rule(lec, "what is the topic of the lecture?", lec_topic, "photosynthesis", "The teacher says they will learn about photosynthesis.")
q("lec_topic", lec, "What is the topic of the lecture?", "what", "photosynthesis", """
script = video.get_script()
context = {"script": script}
answer = video.choose_option("what is the topic of the lecture?", context, possible_answers)
return answer
""", lec_topic)
q("lec_pointing", lec, "What is the teacher pointing at?", "object", "whiteboard", """
teacher_clip = video.trim(video.num_frames // 2, video.num_frames)
responses = teacher_clip.video_query("What is the person pointing at?", possible_answers)
return get_max_key(responses)
""")
lec_device = ["a projector", "a tablet", "a laptop", "a phone", "a chalkboard"]
mc_rule(lec, "what device is next to the teacher?", lec_device, "a laptop", "The caption mentions a laptop.")
q("lec_device", lec, "What device does the teacher stand next to at the start?", "what", "a laptop", """
laptop_clip = video.filter_object("laptop")
caption = laptop_clip.get_caption(0)
context = {"caption": caption}
answer = laptop_clip.choose_option("what device is next to the teacher?", context, possible_answers)
return answer
""", lec_device)
q("lec_people", lec, "How many people are in the lecture video?", "count", "1", """
people = video.track_objects("person")
return len(people)
""")

# --- toy bear ----------------------------------------------------------------

bear = World("toy_bear", 1, 16, lambda i: "a child pushing a toy bear across a table" if i <= 3 else (
    "a toy bear at the front of a table" if i >= 12 else "a child playing with a toy bear"))
bear.obj("bear", range(1, 16), lambda i: rbox(0.6 - 0.02 * min(i, 12), 0.4, 0.15, 0.2), 0.9, {"What color is this bear?": "brown"})
bear.obj("child", range(0, 12), lambda i: rbox(0.7, 0.1, 0.25, 0.7), 0.9)
bear.qa("What is this?", lambda i: "a child pushing a toy" if i <= 3 else "a toy bear")
bear.qa("What is the child doing?", lambda i: "playing" if i < 12 else "nothing")
bear.chunk_captions(lambda c: "a child pushes a toy bear forward" if c < 4 else (
    "a child plays with a toy bear" if c < 12 else "a toy bear sits at the front of the table"))
bear.rule(["Paragraph:"], "A child pushes a toy bear forward across a table and plays with it, leaving the bear at the front of the table.")
bear_opts = ["it was thrown", "the child pushed it", "it was carried by a dog", "it rolled on its own", "a string pulled it"]
mc_rule(bear, "how was the toy bear moved to the front?", bear_opts, bear_opts[1], "The caption shows a child pushing the bear.")
q("bear_moved", bear, "How was the toy bear moved to the front?", "how", bear_opts[1], """
vid_seg = video.trim(0, len(video) // 4) # consider the start
bear_seg = vid_seg.filter_object("bear")
image_context = bear_seg.get_caption(bear_seg.num_frames // 2)
activity_context = bear_seg.video_query("What is this?")
context = {"caption": image_context, "activity": activity_context}
answer = bear_seg.choose_option("how was the toy bear moved to the front?", context, possible_answers)
return answer
""", bear_opts)
q("bear_color", bear, "What color is the toy bear?", "color", "brown", """
bear_boxes = video.find("bear")
responses = bear_boxes.video_query("What color is this bear?", possible_answers)
return get_max_key(responses)
""")
q("bear_child", bear, "What is the child doing?", "action", "playing", """
child_clip = video.filter_object("child")
responses = child_clip.video_query("What is the child doing?", possible_answers)
return get_max_key(responses)
""")
bear_end = ["under the table", "in the child's arms", "at the front of the table", "inside a box", "on the floor"]
mc_rule(bear, "where does the bear end up?", bear_end, bear_end[2], "The summary says the bear is left at the front of the table.")
q("bear_end", bear, "Where does the bear end up?", "where", bear_end[2], """
summary = video.get_summary()
context = {"summary": summary}
answer = video.choose_option("where does the bear end up?", context, possible_answers)
return answer
""", bear_end)
q("bear_person", bear, "What is the person doing?", "action", "playing", """
responses = video.video_query("What is the child doing?", possible_answers)
return get_max_key(responses)
""")

WORLDS = [ski, kit, dog, party, street, lec, bear]

# --- vocabulary, embeddings, examples -----------------------------------------

BY_TYPE = {
    "action": ["skiing", "cooking", "lying down", "playing", "running", "standing"],
    "color": ["black", "brown", "red", "white", "blue"],
    "count": ["1", "2", "3", "4"],
    "location": ["kitchen", "park", "street"],
    "object": ["knife", "carrot", "ball", "cake", "sofa", "truck", "pedestrian", "whiteboard", "laptop"],
    "reason": ["birthday", "wedding"],
    "weather": ["snowy", "sunny", "rainy"],
    "yesno": ["yes", "no"],
}


def normalize_phrase(s):
    s = "".join(c for c in s.lower() if c not in string.punctuation)
    return " ".join(s.split())


def build_embeddings(rng, dim=16):
    tokens = sorted({t for answers in BY_TYPE.values() for a in answers for t in normalize_phrase(a).split()})
    return {t: [round(rng.gauss(0.0, 1.0), 5) for _ in range(dim)] for t in tokens}


def embed(phrase, table):
    dim = len(next(iter(table.values())))
    vs = [table[t] for t in normalize_phrase(phrase).split() if t in table]
    if not vs:
        return [0.0] * dim
    return [sum(col) / len(vs) for col in zip(*vs)]


def cosine(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return 0.0 if na == 0 or nb == 0 else sum(x * y for x, y in zip(a, b)) / (na * nb)


def match(raw, candidates, table):
    norm = normalize_phrase(raw)
    for c in candidates:
        if normalize_phrase(c) == norm:
            return c
    e = embed(raw, table)
    best, score = candidates[0], -math.inf
    for c in candidates:
        s = cosine(e, embed(c, table))
        if s > score:
            best, score = c, s
    return best


EXAMPLES = [
    ("What is the cat sitting on?", "qa", """
cat_clip = video.filter_object("cat")
responses = cat_clip.video_query("What is the cat sitting on?", possible_answers)
return get_max_key(responses)
"""),
    ("What is the person doing?", "qa", """
responses = video.video_query("What is the person doing?", possible_answers)
return get_max_key(responses)
"""),
    ("What color is the umbrella?", "qa", """
umbrella_boxes = video.find("umbrella")
responses = umbrella_boxes.video_query("What color is this umbrella?", possible_answers)
return get_max_key(responses)
"""),
    ("How many birds fly past?", "qa", """
bird_tracks = video.track_objects("bird")
return len(bird_tracks)
"""),
    ("What does the man eat after cooking?", "qa", """
eating_clip = video.filter_property("Is the man eating?")
responses = eating_clip.video_query("What is the man eating?", possible_answers)
return get_max_key(responses)
"""),
    ("Is the door open at the end?", "qa", """
end_clip = video.trim(video.num_frames - 5, video.num_frames)
responses = end_clip.video_query("Is the door open?", possible_answers)
return get_max_key(responses)
"""),
    ("Where is the child playing?", "qa", """
child_clip = video.filter_object("child")
responses = child_clip.video_query("Where is the child playing?", possible_answers)
return get_max_key(responses)
"""),
    ("What is on the table after dinner?", "qa", """
dinner_clip = video.filter_property("Is dinner over?")
table_boxes = dinner_clip.find("table")
responses = table_boxes.video_query("What is on this table?", possible_answers)
return get_max_key(responses)
"""),
    ("What does the narrator say first?", "qa", """
script = video.get_script()
first_clip = video.trim(0, 1)
return first_clip.choose_option("what does the narrator say first?", {"script": script}, possible_answers)
"""),
    ("Why did the woman open the window?", "multiple_choice", """
window_clip = video.filter_object("window")
caption = window_clip.get_caption(window_clip.num_frames // 2)
context = {"caption": caption}
answer = window_clip.choose_option("why did the woman open the window?", context, possible_answers)
return answer
"""),
    ("What is the speaker mainly talking about?", "multiple_choice", """
script = video.get_script()
context = {"script": script}
answer = video.choose_option("what is the speaker mainly talking about?", context, possible_answers)
return answer
"""),
    ("What happens after the boy falls off the bike?", "multiple_choice", """
fall_clip = video.filter_property("Has the boy fallen off the bike?")
activity = fall_clip.video_query("What is the boy doing?", possible_answers)
context = {"activity": activity}
answer = fall_clip.choose_option("what happens after the boy falls off the bike?", context, possible_answers)
return answer
"""),
    ("What is the main activity in the video?", "multiple_choice", """
summary = video.get_summary()
answer = video.choose_option("what is the main activity in the video?", {"summary": summary}, possible_answers)
return answer
"""),
    ("Which animal appears first?", "multiple_choice", """
first = video.get_caption(0)
answer = video.choose_option("which animal appears first?", {"caption": first}, possible_answers)
return answer
"""),
    ("How does the cook stir the soup?", "multiple_choice", """
pot_clip = video.filter_object("pot")
activity = pot_clip.video_query("How is the soup being stirred?")
answer = pot_clip.choose_option("how does the cook stir the soup?", {"activity": activity}, possible_answers)
return answer
"""),
    ("Why is the crowd cheering?", "multiple_choice", """
crowd_clip = video.filter_property("Is the crowd cheering?")
middle = crowd_clip.get_caption(crowd_clip.num_frames // 2)
answer = crowd_clip.choose_option("why is the crowd cheering?", {"caption": middle}, possible_answers)
return answer
"""),
    ("What does the dog carry at the end?", "multiple_choice", """
end_clip = video.trim(video.num_frames - 3, video.num_frames)
dog_boxes = end_clip.find("dog")
activity = dog_boxes.video_query("What is the dog carrying?")
answer = end_clip.choose_option("what does the dog carry at the end?", {"activity": activity}, possible_answers)
return answer
"""),
]


def main():
    rng = random.Random(20240517)
    if OUT.exists():
        shutil.rmtree(OUT)
    (OUT / "worlds").mkdir(parents=True)
    (OUT / "fixtures").mkdir()

    for w in WORLDS:
        (OUT / "worlds" / f"{w.video_id}.json").write_text(json.dumps(w.to_json(), indent=1, sort_keys=True) + "\n")

    assert len(QUESTIONS) >= 30
    ids = [r["question_id"] for r, _ in QUESTIONS]
    assert len(set(ids)) == len(ids)
    with open(OUT / "dataset.jsonl", "w") as f:
        for rec, program in QUESTIONS:
            f.write(json.dumps(rec) + "\n")
            (OUT / "fixtures" / f"{rec['question_id']}.pvql").write_text(program)

    answers = []
    for t in sorted(BY_TYPE):
        answers += [a for a in BY_TYPE[t] if a not in answers]
    vocab = {"answers": answers, "by_type": BY_TYPE}
    (OUT / "vocab.json").write_text(json.dumps(vocab, indent=1) + "\n")

    table = build_embeddings(rng)
    with open(OUT / "embeddings.txt", "w") as f:
        f.write(f"{len(table)} {len(next(iter(table.values())))}\n")
        for t, v in table.items():
            f.write(t + " " + " ".join(f"{x:.5f}" for x in v) + "\n")

    # Caption-valued answers must land on the intended vocabulary entry.
    captions = {"party_first": party.frames[0]["caption"], "street_vehicle": street.frames[10]["caption"]}
    for rec, _ in QUESTIONS:
        if rec["question_id"] in captions:
            got = match(captions[rec["question_id"]], BY_TYPE[rec["type"]], table)
            assert got == rec["answers"][0], (rec["question_id"], got)
        if "options" not in rec:
            assert rec["answers"][0] in BY_TYPE[rec["type"]], rec["question_id"]

    pool = [{"question": qn, "program": HEAD + "\n".join("    " + l for l in p.strip("\n").splitlines()) + "\n",
             "task": task, "split": "train"} for qn, task, p in EXAMPLES]
    (OUT / "examples.json").write_text(json.dumps(pool, indent=1) + "\n")

    config = {
        "mock_worlds": ["worlds"],
        "fixtures": "fixtures",
        "example_pool": "examples.json",
        "embeddings": "embeddings.txt",
        "vocab": "vocab.json",
        "vocab_mode": "type_based",
        "api": {"get_summary": True},
        "examples_k": 4,
        "workers": 4,
        "max_concurrency": 8,
    }
    (OUT / "config.json").write_text(json.dumps(config, indent=1) + "\n")
    print(f"wrote {len(WORLDS)} worlds and {len(QUESTIONS)} questions to {OUT}")


if __name__ == "__main__":
    main()
